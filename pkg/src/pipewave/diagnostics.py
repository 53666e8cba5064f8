"""Cross-system verification and reproduction of the reference experiments.

Moment-matching checks, exponential decay-rate fits, and the two summary
tables: initial mass/energy of the reduced models under plain projection
versus the mass-constrained projection, and the energy decay of the full
model against standard and compatibility-modified reduced models.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .descriptor import DescriptorSystem, SingularPencilError, from_fem, moments
from .fem import FemSystem, Mesh, assemble, project_initial
from .mor import (
    DROP_TOL,
    ReducedSystem,
    build_compatible_bases,
    cs_split,
    krylov_iterate,
    project,
    project_initial_reduced,
    standard_bases,
)
from .network import builtin_scenario
from .timeint import SimulationTrace, ThetaScheme, simulate

__all__ = [
    "ComparisonReport",
    "DecayFit",
    "verify_moment_matching",
    "fit_decay_rate",
    "reproduce_table_mass",
    "reproduce_table_energy",
]


@dataclass
class ComparisonReport:
    """Bundle of verification artifacts collected for one scenario/config."""

    moment_errors: dict | None = None
    compatibility: dict | None = None
    pencil_regularity: dict | None = None
    decay_rates: dict = field(default_factory=dict)
    table_mass: dict | None = None
    table_energy: dict | None = None

    def to_dict(self) -> dict:
        return {
            "moments": self.moment_errors,
            "compatibility": self.compatibility,
            "pencil": self.pencil_regularity,
            "decay": self.decay_rates,
            "table_mass": self.table_mass,
            "table_energy": self.table_energy,
        }


class DecayFit(NamedTuple):
    gamma: float
    r_squared: float
    truncated: bool


def verify_moment_matching(
    full: DescriptorSystem,
    reduced: DescriptorSystem,
    s0: float,
    L: int,
    tol: float = 1e-8,
) -> dict:
    """Compare the first 2L transfer moments of two systems at shift s0.

    A singular pencil on either side is reported as a structural failure in
    the returned dict rather than raised, since reduced models built without
    the compatibility modifications are expected to produce one.
    """
    count = 2 * L
    try:
        full_moments = moments(full, s0, count).moments
    except SingularPencilError as exc:
        return {
            "s0": s0, "count": count, "entries": [],
            "structural_failure": f"full pencil singular at s0 = {s0:g} "
                                  f"(rcond = {exc.rcond:.3e})",
            "pass": False,
        }
    try:
        reduced_moments = moments(reduced, s0, count).moments
    except SingularPencilError as exc:
        return {
            "s0": s0, "count": count, "entries": [],
            "structural_failure": f"reduced pencil singular at s0 = {s0:g} "
                                  f"(rcond = {exc.rcond:.3e})",
            "pass": False,
        }

    entries = []
    for ell, (m_full, m_red) in enumerate(zip(full_moments, reduced_moments)):
        ref = np.linalg.norm(m_full)
        err = np.linalg.norm(m_red - m_full)
        rel = err / ref if ref > 0 else err
        entries.append({"ell": ell, "error": float(rel), "pass": bool(rel <= tol)})
    return {
        "s0": s0, "count": count, "entries": entries,
        "structural_failure": None,
        "pass": bool(all(e["pass"] for e in entries)),
    }


def fit_decay_rate(trace: SimulationTrace, window: tuple[float, float]) -> DecayFit:
    """Least-squares fit of log E_h(t) over the window; gamma = -slope.

    Samples where the recorded energy is not strictly positive end the
    usable data (the flag ``truncated`` records that this happened). At most
    500 evenly spaced samples enter the fit. r_squared is the coefficient of
    determination; a constant series fits exactly and reports 1.
    """
    t_start, t_end = window
    mask = (trace.times >= t_start) & (trace.times <= t_end)
    t = trace.times[mask]
    e = trace.energy[mask]
    if t.size < 2:
        raise ValueError("decay window contains fewer than two samples")

    truncated = False
    bad = np.nonzero(e <= 0.0)[0]
    if bad.size:
        truncated = True
        t, e = t[: bad[0]], e[: bad[0]]
        if t.size < 2:
            raise ValueError("energy is nonpositive on the decay window")

    if t.size > 500:
        idx = np.unique(np.round(np.linspace(0, t.size - 1, 500)).astype(int))
        t, e = t[idx], e[idx]

    log_e = np.log(e)
    slope, intercept = np.polyfit(t, log_e, 1)
    fitted = slope * t + intercept
    ss_res = float(np.sum((log_e - fitted) ** 2))
    ss_tot = float(np.sum((log_e - np.mean(log_e)) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return DecayFit(gamma=float(-slope), r_squared=r2, truncated=truncated)


def _tp1_left_input_setup(
    mesh_cells: int,
) -> tuple[FemSystem, DescriptorSystem, np.ndarray, np.ndarray]:
    """Single pipe with p0 = 1, q0 = 0 and only the left port driving Krylov."""
    net = builtin_scenario("tp1")
    mesh = Mesh.uniform(net, mesh_cells)
    fem = assemble(net, mesh)
    full = from_fem(fem)
    x1, x2 = project_initial(fem, 1.0, 0.0)
    return fem, full, x1, x2


def _reduced_models(
    fem: FemSystem,
    full: DescriptorSystem,
    s0: float,
    L: int,
    tol: float,
) -> dict[str, ReducedSystem]:
    basis_src = full.restrict_inputs([0])
    W = krylov_iterate(basis_src, s0, L, tol)
    W1, W2 = cs_split(W, fem, tol)
    return {
        "standard": project(fem, standard_bases(W1, W2, fem, tol), tol),
        "improved": project(fem, build_compatible_bases(W1, W2, fem, tol), tol),
    }


#: Drop tolerance used by the table reproductions. At L = 10 the splitting
#: produces one direction with cosine near 8e-8 sitting in a wide gap of the
#: cosine spectrum; the reference values correspond to dropping it, so the
#: tables deflate more aggressively than the library default of 1e-8.
TABLE_TOL = 1e-6


def reproduce_table_mass(
    mesh_cells: int = 200,
    L_values: Sequence[int] = (1, 3, 10),
    s0: float = 0.0,
    tol: float = TABLE_TOL,
) -> dict:
    """Initial mass and energy of the reduced single-pipe models.

    For each L and each basis mode, reports (m_h(0), E_h(0)) after plain
    energy projection of p0 = 1, q0 = 0 and after the mass-constrained
    variant of the projection.
    """
    fem, full, x1, x2 = _tp1_left_input_setup(mesh_cells)
    mass_full = float(fem.o1 @ (fem.M1 @ x1))
    energy_full = 0.5 * (float(x1 @ (fem.M1 @ x1)) + float(x2 @ (fem.M2 @ x2)))

    grid: dict = {
        "L": list(L_values),
        "full": {"mass": mass_full, "energy": energy_full},
    }
    for mode in ("standard", "improved"):
        grid[mode] = {"projection": [], "constraint": []}
    for L in L_values:
        models = _reduced_models(fem, full, s0, L, tol)
        for mode, rs in models.items():
            for variant, enforce in (("projection", False), ("constraint", True)):
                z1, z2 = project_initial_reduced(
                    rs.basis, fem, x1, x2, enforce_mass=enforce
                )
                m = float(rs.o1_hat @ (rs.M1h @ z1))
                e = 0.5 * (float(z1 @ (rs.M1h @ z1)) + float(z2 @ (rs.M2h @ z2)))
                grid[mode][variant].append({"L": L, "mass": m, "energy": e})
    return grid


def reproduce_table_energy(
    mesh_cells: int = 200,
    L_values: Sequence[int] = (1, 3, 10),
    s0: float = 0.0,
    tau: float = 5e-3,
    theta: float = 1.0,
    T: float = 4.0,
    sample_times: Sequence[float] = (0.0, 1.0, 2.0, 3.0, 4.0),
    tol: float = TABLE_TOL,
) -> dict:
    """Free energy decay E_h(t) of the full and reduced single-pipe models.

    Homogeneous run (u = 0) from p0 = 1, q0 = 0; reduced initial data by
    plain energy projection.  The default scheme is implicit Euler with
    tau = 5e-3: the reference grid this reproduces was computed with that
    scheme, and its numerical dissipation is visible in the exact column
    (the homogeneous decay rate with vanishing step size is 1.0, the
    tabulated column decays at roughly 1.08).
    """
    fem, full, x1, x2 = _tp1_left_input_setup(mesh_cells)
    scheme = ThetaScheme(theta=theta, tau=tau, T=T)
    indices = [int(round(t / tau)) for t in sample_times]
    if any(i < 0 or i > scheme.steps for i in indices):
        raise ValueError("sample times must lie inside [0, T]")

    def sampled_energy(trace: SimulationTrace) -> list[float]:
        return [float(trace.energy[i]) for i in indices]

    grid: dict = {"times": list(sample_times)}
    trace = simulate(full, (x1, x2), None, scheme, keep_states=False)
    grid["exact"] = sampled_energy(trace)
    for mode in ("standard", "improved"):
        grid[mode] = {}
    for L in L_values:
        models = _reduced_models(fem, full, s0, L, tol)
        for mode, rs in models.items():
            z1, z2 = project_initial_reduced(rs.basis, fem, x1, x2)
            rtrace = simulate(
                rs.simulation_form(), (z1, z2), None, scheme, keep_states=False
            )
            grid[mode][L] = sampled_energy(rtrace)
    return grid
