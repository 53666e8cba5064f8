"""Mixed finite element discretization of pressure waves on a pipe network.

Pressure is approximated by piecewise constants, one value per mesh cell, in
the a-weighted L2 inner product. Mass flux is approximated by piecewise
linear nodal functions that are continuous along each edge but broken across
junctions, with b-weighted mass matrix M2 and d-weighted damping matrix D.
The coupling blocks realize the broken derivative (G), the junction flux
balance (N) and the port injection (B2).

Degrees of freedom are ordered edge by edge: pressure cells left to right
from tail to head, flux nodes the same way including both endpoints.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .network import Network, classify_vertices, incidence_sign

__all__ = ["Mesh", "FemSystem", "assemble", "check_A0", "project_initial"]

# two-point Gauss rule on [0, 1]
_GAUSS_X = (0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0))
_GAUSS_W = (0.5, 0.5)


@dataclass(frozen=True)
class Mesh:
    """Uniform mesh per edge: ``cells[e]`` subintervals of width ``widths[e]``."""

    cells: tuple[int, ...]
    widths: tuple[float, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "cells", tuple(int(n) for n in self.cells))
        object.__setattr__(self, "widths", tuple(float(h) for h in self.widths))
        if len(self.cells) != len(self.widths):
            raise ValueError("cells and widths must have one entry per edge")
        if any(n < 1 for n in self.cells):
            raise ValueError("every edge needs at least one cell")
        if any(h <= 0 for h in self.widths):
            raise ValueError("cell widths must be positive")

    @classmethod
    def uniform(cls, network: Network, cells_per_edge: int) -> "Mesh":
        n = int(cells_per_edge)
        if n < 1:
            raise ValueError("cells_per_edge must be a positive integer")
        return cls(
            cells=tuple(n for _ in network.edges),
            widths=tuple(e.length / n for e in network.edges),
        )

    @property
    def h(self) -> float:
        """Global mesh size, the largest cell width."""
        return max(self.widths)


@dataclass(frozen=True)
class FemSystem:
    """Assembled full-order matrices and distinguished vectors.

    k1/k2/k3 are the pressure, flux and constraint dimensions. ``o1`` holds
    the coordinates of the constant-one pressure, ``nullG`` the per-edge
    indicator flux functions (a basis of the nullspace of G). ``ports`` and
    ``interior`` record the boundary/interior vertex indices in the order
    used for B2 columns and N rows. Arrays are treated as immutable.
    """

    network: Network
    mesh: Mesh
    k1: int
    k2: int
    k3: int
    M1: np.ndarray
    M2: np.ndarray
    D: np.ndarray
    G: np.ndarray
    N: np.ndarray
    B2: np.ndarray
    o1: np.ndarray
    nullG: np.ndarray
    pressure_offsets: tuple[int, ...]
    flux_offsets: tuple[int, ...]
    ports: tuple[int, ...]
    interior: tuple[int, ...]

    def port_names(self) -> tuple[str, ...]:
        return tuple(self.network.vertices[v] for v in self.ports)

    def flux_node(self, e: int, v: int) -> int:
        """Global flux index of edge e's endpoint node at vertex v."""
        edge = self.network.edges[e]
        if v == edge.tail:
            return self.flux_offsets[e]
        if v == edge.head:
            return self.flux_offsets[e] + self.mesh.cells[e]
        raise ValueError(f"vertex {v} is not an endpoint of edge {e}")


def assemble(network: Network, mesh: Mesh) -> FemSystem:
    """Assemble M1, M2, D, G, N, B2 and the distinguished vectors."""
    if len(mesh.cells) != len(network.edges):
        raise ValueError("mesh does not match the network's edge count")
    interior, ports = classify_vertices(network)

    ncells = mesh.cells
    k1 = sum(ncells)
    k2 = sum(n + 1 for n in ncells)
    k3 = len(interior)

    poff, foff = [], []
    p, f = 0, 0
    for n in ncells:
        poff.append(p)
        foff.append(f)
        p += n
        f += n + 1

    M1 = np.zeros((k1, k1))
    M2 = np.zeros((k2, k2))
    D = np.zeros((k2, k2))
    G = np.zeros((k1, k2))
    nullG = np.zeros((k2, len(network.edges)))

    for e, edge in enumerate(network.edges):
        n, h = ncells[e], mesh.widths[e]
        cells = slice(poff[e], poff[e] + n)
        nodes = slice(foff[e], foff[e] + n + 1)
        M1[cells, cells] += np.diag(np.full(n, edge.a * h))
        # nodal hat functions: each cell contributes (w*h/6) * [[2, 1], [1, 2]]
        local = np.array([[2.0, 1.0], [1.0, 2.0]]) / 6.0
        for i in range(n):
            j = foff[e] + i
            M2[j : j + 2, j : j + 2] += edge.b * h * local
            D[j : j + 2, j : j + 2] += edge.d * h * local
            # int over the cell of dpsi/dx: -1 for the left node, +1 for the right
            G[poff[e] + i, j] = -1.0
            G[poff[e] + i, j + 1] = +1.0
        nullG[nodes, e] = 1.0

    N = np.zeros((k3, k2))
    B2 = np.zeros((k2, len(ports)))
    geom = _Geometry(network, mesh, tuple(foff))
    for row, v in enumerate(interior):
        for edge in network.incident_edges(v):
            N[row, geom.flux_node(edge.id, v)] += incidence_sign(network, edge.id, v)
    for col, v in enumerate(ports):
        (edge,) = network.incident_edges(v)
        sign = incidence_sign(network, edge.id, v)
        B2[geom.flux_node(edge.id, v), col] = -sign

    return FemSystem(
        network=network,
        mesh=mesh,
        k1=k1,
        k2=k2,
        k3=k3,
        M1=M1,
        M2=M2,
        D=D,
        G=G,
        N=N,
        B2=B2,
        o1=np.ones(k1),
        nullG=nullG,
        pressure_offsets=tuple(poff),
        flux_offsets=tuple(foff),
        ports=tuple(ports),
        interior=tuple(interior),
    )


class _Geometry:
    """Flux-node lookup used during assembly, before the FemSystem exists."""

    def __init__(self, network: Network, mesh: Mesh, foff: tuple[int, ...]):
        self.network = network
        self.mesh = mesh
        self.foff = foff

    def flux_node(self, e: int, v: int) -> int:
        edge = self.network.edges[e]
        if v == edge.tail:
            return self.foff[e]
        if v == edge.head:
            return self.foff[e] + self.mesh.cells[e]
        raise ValueError(f"vertex {v} is not an endpoint of edge {e}")


def check_A0(sys: FemSystem, tol: float = 1e-8) -> dict:
    """Diagnostic report for the structural assumptions on the assembly.

    Checks symmetry and positive definiteness of M1, M2, D and that the
    stacked map [G', N'] has trivial nullspace (smallest singular value of
    the stack above tol times the largest). Always returns a report.
    """
    report: dict = {}
    for name, mat in (("M1", sys.M1), ("M2", sys.M2), ("D", sys.D)):
        sym_defect = float(np.max(np.abs(mat - mat.T))) if mat.size else 0.0
        min_eig = float(np.min(np.linalg.eigvalsh(0.5 * (mat + mat.T)))) if mat.size else 0.0
        scale = float(np.max(np.abs(mat))) if mat.size else 0.0
        ok = sym_defect <= tol * max(scale, 1.0) and min_eig > 0.0
        report[name] = {
            "symmetry_defect": sym_defect,
            "min_eigenvalue": min_eig,
            "pass": bool(ok),
        }
    stacked = np.vstack([sys.G, sys.N])
    svals = np.linalg.svd(stacked, compute_uv=False)
    smax = float(svals[0]) if svals.size else 0.0
    smin = float(svals[-1]) if stacked.shape[0] <= stacked.shape[1] and svals.size else 0.0
    if stacked.shape[0] > stacked.shape[1]:
        smin = 0.0  # more rows than columns cannot have full row rank
    ok = smin > tol * smax > 0.0
    report["stacked_map"] = {"sigma_min": smin, "sigma_max": smax, "pass": bool(ok)}
    report["pass"] = bool(all(section["pass"] for section in report.values() if isinstance(section, dict)))
    return report


def _edge_samples(value, x: np.ndarray) -> np.ndarray:
    """Evaluate constant or callable initial data at local coordinates x."""
    if callable(value):
        return np.asarray([float(value(xi)) for xi in x])
    return np.full(len(x), float(value))


def _as_coordinates(value, size: int) -> np.ndarray | None:
    """Return a copy when value already is a coordinate vector of length size."""
    if isinstance(value, (list, tuple, np.ndarray)) and not callable(value):
        arr = np.asarray(value, dtype=float)
        if arr.shape != (size,):
            raise ValueError(f"coordinate vector has shape {arr.shape}, expected ({size},)")
        return arr.copy()
    return None


def project_initial(sys: FemSystem, p0, q0) -> tuple[np.ndarray, np.ndarray]:
    """Weighted L2 projection of initial data onto the discrete spaces.

    ``p0``/``q0`` may be scalars, callables of the local edge coordinate, or
    coordinate vectors of length k1/k2 (used verbatim). Loads use the
    a- and b-weighted inner products with two-point Gauss quadrature per
    cell, so constants are reproduced exactly.
    """
    x1 = _as_coordinates(p0, sys.k1)
    if x1 is None:
        load1 = np.zeros(sys.k1)
        for e, edge in enumerate(sys.network.edges):
            n, h = sys.mesh.cells[e], sys.mesh.widths[e]
            for i in range(n):
                xg = (i + np.asarray(_GAUSS_X)) * h
                vals = _edge_samples(p0, xg)
                load1[sys.pressure_offsets[e] + i] = edge.a * h * float(np.dot(_GAUSS_W, vals))
        x1 = load1 / np.diag(sys.M1)

    x2 = _as_coordinates(q0, sys.k2)
    if x2 is None:
        load2 = np.zeros(sys.k2)
        for e, edge in enumerate(sys.network.edges):
            n, h = sys.mesh.cells[e], sys.mesh.widths[e]
            for i in range(n):
                xg = (i + np.asarray(_GAUSS_X)) * h
                vals = _edge_samples(q0, xg)
                local_x = np.asarray(_GAUSS_X)
                j = sys.flux_offsets[e] + i
                # hat function values on the cell: 1-x for the left node, x for the right
                load2[j] += edge.b * h * float(np.dot(_GAUSS_W, vals * (1.0 - local_x)))
                load2[j + 1] += edge.b * h * float(np.dot(_GAUSS_W, vals * local_x))
        x2 = cho_solve(cho_factor(sys.M2), load2)

    return x1, x2
