"""Structure-preserving model reduction by Krylov moment matching.

The pipeline: a block Arnoldi iteration in the E-seminorm produces a basis W
of the Krylov space, a cosine-sine decomposition splits W stably into
per-field blocks W1 (pressure) and W2 (flux), and a modification step
restores the algebraic compatibility conditions

    (A1) the constant-one pressure lies in range(V1),
    (A2) range(M1 V1) = range(G V2),
    (A3) nullspace(G) lies in range(V2) and N maps it onto the constraint
         space,

which together guarantee that the reduced model conserves mass, dissipates
energy and keeps regular steady states. The unmodified bases ("standard"
mode) are kept for comparison experiments where these properties fail.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve, cholesky, get_lapack_funcs, qr, solve_triangular, svd

from .descriptor import DescriptorSystem, build_descriptor, shifted_solver
from .fem import FemSystem

__all__ = [
    "DROP_TOL",
    "SurjectivityError",
    "KrylovBasis",
    "ProjectionBasis",
    "ReducedSystem",
    "ortho",
    "krylov_iterate",
    "cs_split",
    "min_norm_solve",
    "build_compatible_bases",
    "standard_bases",
    "check_compatibility",
    "project",
    "project_initial_reduced",
]

#: Default drop tolerance: columns whose seminorm after orthogonalization
#: stays at or below this (retained columns are normalized to unit norm)
#: are deflated. One knob for ortho, cs_split and the compatibility checks.
DROP_TOL = 1e-8


class SurjectivityError(RuntimeError):
    """The stacked map [G; N] is not (numerically) surjective."""


@dataclass(frozen=True)
class KrylovBasis:
    """E-orthonormal basis of the Krylov space after L recursion levels."""

    W: np.ndarray
    s0: float
    L: int
    input_count: int

    @property
    def dim(self) -> int:
        return self.W.shape[1]


@dataclass(frozen=True)
class ProjectionBasis:
    """M1-/M2-orthonormal projection bases for pressure and flux.

    ``o1_hat`` holds the reduced coordinates of the constant-one pressure
    (exact when (A1) holds, the least-squares fit otherwise). ``mode`` is
    "improved" when the compatibility modifications were applied and
    "standard" for the raw Krylov splitting.
    """

    V1: np.ndarray
    V2: np.ndarray
    o1_hat: np.ndarray
    mode: str


@dataclass(frozen=True)
class ReducedSystem:
    """Galerkin-projected system blocks plus assembled descriptor forms.

    The constraint dimension k3 is never reduced. ``ode_form`` is the
    multiplier-eliminated system that exists when the reduced coupling block
    N V2 vanishes (standard mode on networks with junctions); its flag
    ``multiplier_eliminated`` records that the Lagrange multiplier cannot be
    recovered uniquely in that case.
    """

    M1h: np.ndarray
    M2h: np.ndarray
    Dh: np.ndarray
    Gh: np.ndarray
    Nh: np.ndarray
    B2h: np.ndarray
    o1_hat: np.ndarray
    basis: ProjectionBasis
    descriptor: DescriptorSystem
    ode_form: DescriptorSystem | None
    multiplier_eliminated: bool

    def simulation_form(self) -> DescriptorSystem:
        """System to integrate in time: the ODE form when it exists."""
        return self.ode_form if self.ode_form is not None else self.descriptor


def _as_block(V) -> np.ndarray:
    arr = np.asarray(V, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    return arr


def ortho(V, W_fixed, M: np.ndarray, tol: float = DROP_TOL) -> np.ndarray:
    """M-orthonormalize the columns of V against W_fixed and each other.

    Modified Gram-Schmidt with one re-orthogonalization pass, in the inner
    product induced by the symmetric positive semi-definite matrix M: two
    projection passes against the fixed block W_fixed (assumed
    M-orthonormal), then two passes against previously accepted columns.
    Columns whose M-seminorm after orthogonalization is <= tol are dropped,
    so degenerate input simply yields fewer columns. Vectors with zero
    M-seminorm (pure Lagrange components under M = E) can never be retained.
    """
    n = M.shape[0]
    if V is None:
        return np.zeros((n, 0))
    V = _as_block(V)
    if V.shape[1] == 0:
        return np.zeros((n, 0))
    if W_fixed is None:
        W_fixed = np.zeros((n, 0))
    else:
        W_fixed = _as_block(W_fixed)
    MW = M @ W_fixed if W_fixed.shape[1] else W_fixed

    accepted: list[np.ndarray] = []
    m_accepted: list[np.ndarray] = []
    for k in range(V.shape[1]):
        v = V[:, k].copy()
        for _ in range(2):
            for j in range(W_fixed.shape[1]):
                v -= W_fixed[:, j] * (MW[:, j] @ v)
        for _ in range(2):
            for w, mw in zip(accepted, m_accepted):
                v -= w * (mw @ v)
        mv = M @ v
        d = np.sqrt(max(float(v @ mv), 0.0))
        if d > tol:
            accepted.append(v / d)
            m_accepted.append(mv / d)
    if not accepted:
        return np.zeros((n, 0))
    return np.column_stack(accepted)


def krylov_iterate(
    sys: DescriptorSystem, s0: float, L: int, tol: float = DROP_TOL
) -> KrylovBasis:
    """Block Arnoldi in the E-seminorm for the shifted moment recursion.

    The first block solves (s0 E + A) r = B; every further level solves
    against E times the previously orthonormalized block. Deflated columns
    shrink the block but never the number of levels.
    """
    if L < 1:
        raise ValueError("L must be a positive integer")
    solve = shifted_solver(sys, s0)
    r = solve(sys.B)
    r = ortho(r, None, sys.E, tol)
    W = r
    for _ in range(1, L):
        if r.shape[1] == 0:
            break
        r = solve(sys.E @ r)
        r = ortho(r, W, sys.E, tol)
        W = np.hstack([W, r])
    return KrylovBasis(W=W, s0=float(s0), L=int(L), input_count=sys.input_count)


def cs_split(W, sys: FemSystem, tol: float = DROP_TOL) -> tuple[np.ndarray, np.ndarray]:
    """Split a Krylov basis into M1-/M2-orthonormal per-field blocks.

    Computes the cosine-sine (generalized SVD) factorization of the pair
    (R1 W1raw, R2 W2raw) with R_i the Cholesky factors of M_i: orthonormalize
    the stacked weighted matrix, SVD the pressure block to get U1 and the
    cosines, rotate the flux block to get the sines. Columns with cosine
    (resp. sine) above tol survive into W1 = R1^{-1} U1 (resp.
    W2 = R2^{-1} U2). A final thin QR of the sine block keeps the columns
    orthonormal to machine precision even when sines are tiny.
    """
    if isinstance(W, KrylovBasis):
        W = W.W
    W = _as_block(W)
    k1, k2 = sys.k1, sys.k2
    try:
        R1 = cholesky(sys.M1, lower=False)
        R2 = cholesky(sys.M2, lower=False)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - guarded by (A0)
        raise ValueError("M1/M2 must be symmetric positive definite") from exc
    if W.shape[1] == 0:
        return np.zeros((k1, 0)), np.zeros((k2, 0))

    Y = np.vstack([R1 @ W[:k1], R2 @ W[k1 : k1 + k2]])
    Q = qr(Y, mode="economic")[0]
    Q1, Q2 = Q[:k1], Q[k1:]

    U1, cosines, Z1t = svd(Q1, full_matrices=False)
    cosines = np.clip(cosines, 0.0, 1.0)
    T2 = Q2 @ Z1t.T
    sines = np.linalg.norm(T2, axis=0)

    W1 = solve_triangular(R1, U1[:, cosines > tol])
    kept = T2[:, sines > tol]
    if kept.shape[1]:
        U2 = qr(kept, mode="economic")[0]
        W2 = solve_triangular(R2, U2)
    else:
        W2 = np.zeros((k2, 0))
    return W1, W2


def min_norm_solve(sys: FemSystem, g1, g3) -> np.ndarray:
    """Minimum-M2-norm solution of G x2 = g1, N x2 = g3.

    Realizes the weighted pseudo-inverse
    x2 = M2^{-1} [G' N'] ([G; N] M2^{-1} [G' N'])^{-1} [g1; g3]
    via a Cholesky solve with the Schur complement. Raises
    SurjectivityError when the Schur complement is numerically singular,
    which happens exactly when the stacked map [G; N] is not surjective.
    """
    g1 = np.asarray(g1, dtype=float)
    g3 = np.asarray(g3, dtype=float)
    squeeze = g1.ndim == 1
    g1 = _as_block(g1)
    g3 = _as_block(g3) if g3.size else np.zeros((sys.k3, g1.shape[1]))
    if g1.shape[0] != sys.k1 or g3.shape[0] != sys.k3 or g1.shape[1] != g3.shape[1]:
        raise ValueError("right-hand sides must have shapes (k1, m) and (k3, m)")

    stacked = np.vstack([sys.G, sys.N])
    m2 = cho_factor(sys.M2)
    Z = cho_solve(m2, stacked.T)  # M2^{-1} [G' N']
    schur = stacked @ Z
    try:
        factor = cho_factor(schur)
    except np.linalg.LinAlgError as exc:
        raise SurjectivityError("stacked map [G; N] is not surjective") from exc
    anorm = np.linalg.norm(schur, 1)
    (pocon,) = get_lapack_funcs(("pocon",), (factor[0],))
    rcond, info = pocon(factor[0], anorm, uplo="L" if factor[1] else "U")
    if info != 0 or not float(rcond) >= 1e-12:
        raise SurjectivityError(
            f"stacked map [G; N] is numerically rank deficient (rcond = {float(rcond):.3e})"
        )
    x2 = Z @ cho_solve(factor, np.vstack([g1, g3]))
    return x2[:, 0] if squeeze else x2


def _o1_coordinates(V1: np.ndarray, sys: FemSystem) -> np.ndarray:
    """Reduced coordinates of the constant-one pressure: M1h^{-1} V1' M1 o1.

    With this convention o1_hat' M1h z1 recovers the mass of the
    reconstructed pressure V1 z1 for any basis, orthonormal or not.
    """
    if V1.shape[1] == 0:
        return np.zeros(0)
    M1h = V1.T @ sys.M1 @ V1
    return np.linalg.solve(M1h, V1.T @ (sys.M1 @ sys.o1))


def build_compatible_bases(
    W1: np.ndarray, W2: np.ndarray, sys: FemSystem, tol: float = DROP_TOL
) -> ProjectionBasis:
    """Modify split Krylov blocks so that (A1), (A2), (A3) hold.

    V1 extends W1 by the constant-one pressure. V2 spans the nullspace of G
    together with the minimum-norm preimages of M1 V1 under [G; N], which
    realizes (A2) while keeping the junction constraints satisfiable.
    """
    W1 = _as_block(W1) if W1 is not None else np.zeros((sys.k1, 0))
    W2 = _as_block(W2) if W2 is not None else np.zeros((sys.k2, 0))
    V1 = ortho(np.hstack([W1, sys.o1[:, None]]), None, sys.M1, tol)
    preimages = min_norm_solve(sys, sys.M1 @ V1, np.zeros((sys.k3, V1.shape[1])))
    V2 = ortho(np.hstack([sys.nullG, preimages]), None, sys.M2, tol)
    return ProjectionBasis(V1=V1, V2=V2, o1_hat=_o1_coordinates(V1, sys), mode="improved")


def standard_bases(
    W1: np.ndarray, W2: np.ndarray, sys: FemSystem, tol: float = DROP_TOL
) -> ProjectionBasis:
    """Raw Krylov bases without modifications, for comparison experiments.

    ``o1_hat`` is the least-squares fit of the constant-one pressure, which
    in general does not reproduce it.
    """
    W1 = _as_block(W1) if W1 is not None else np.zeros((sys.k1, 0))
    W2 = _as_block(W2) if W2 is not None else np.zeros((sys.k2, 0))
    return ProjectionBasis(V1=W1, V2=W2, o1_hat=_o1_coordinates(W1, sys), mode="standard")


def _range_residuals(P: np.ndarray, Q: np.ndarray) -> float:
    """Largest relative residual of fitting columns of P in range(Q)."""
    if P.shape[1] == 0:
        return 0.0
    if Q.shape[1] == 0:
        norms = np.linalg.norm(P, axis=0)
        return float(np.max(np.where(norms > 0, 1.0, 0.0)))
    coef, *_ = np.linalg.lstsq(Q, P, rcond=None)
    res = P - Q @ coef
    norms = np.linalg.norm(P, axis=0)
    rel = np.linalg.norm(res, axis=0) / np.where(norms > 0, norms, 1.0)
    return float(np.max(rel))


def check_compatibility(basis: ProjectionBasis, sys: FemSystem, tol: float = DROP_TOL) -> dict:
    """Diagnostic report with booleans and residuals for (A1), (A2), (A3)."""
    V1, V2 = basis.V1, basis.V2

    M1o1 = sys.M1 @ sys.o1
    o1_norm = np.sqrt(float(sys.o1 @ M1o1))
    fit = V1 @ (V1.T @ M1o1) if V1.shape[1] else np.zeros(sys.k1)
    res = sys.o1 - fit
    a1_res = np.sqrt(max(float(res @ (sys.M1 @ res)), 0.0)) / o1_norm
    a1 = {"residual": float(a1_res), "pass": bool(a1_res <= tol)}

    P = sys.M1 @ V1
    Q = sys.G @ V2
    a2_res = max(_range_residuals(P, Q), _range_residuals(Q, P))
    a2 = {"residual": float(a2_res), "pass": bool(a2_res <= tol)}

    if V2.shape[1]:
        coords = V2.T @ (sys.M2 @ sys.nullG)
        res_null = sys.nullG - V2 @ coords
    else:
        res_null = sys.nullG
    norms = np.sqrt(np.maximum(np.einsum("ij,ij->j", res_null, sys.M2 @ res_null), 0.0))
    ref = np.sqrt(np.maximum(np.einsum("ij,ij->j", sys.nullG, sys.M2 @ sys.nullG), 0.0))
    a3_res = float(np.max(norms / ref)) if ref.size else 0.0
    n_on_null = sys.N @ sys.nullG
    sigma_min = float(np.linalg.svd(n_on_null, compute_uv=False)[-1]) if sys.k3 else np.inf
    nv2 = float(np.max(np.abs(sys.N @ V2))) if sys.k3 and V2.shape[1] else 0.0
    a3_pass = a3_res <= tol and (sys.k3 == 0 or sigma_min > tol)
    a3 = {
        "residual": a3_res,
        "sigma_min_N_on_nullspace": None if sys.k3 == 0 else sigma_min,
        "NV2_max": nv2,
        "pass": bool(a3_pass),
    }

    return {"A1": a1, "A2": a2, "A3": a3, "pass": bool(a1["pass"] and a2["pass"] and a3["pass"])}


def project(sys: FemSystem, basis: ProjectionBasis, tol: float = DROP_TOL) -> ReducedSystem:
    """Galerkin projection onto the basis, constraint dimension untouched.

    In standard mode with vanishing reduced coupling N V2, the descriptor
    pencil is singular for every shift; the multiplier-eliminated ODE form
    is then provided for time integration.
    """
    V1, V2 = basis.V1, basis.V2
    M1h = V1.T @ sys.M1 @ V1
    M2h = V2.T @ sys.M2 @ V2
    Dh = V2.T @ sys.D @ V2
    Gh = V1.T @ sys.G @ V2
    Nh = sys.N @ V2
    B2h = V2.T @ sys.B2
    full = build_descriptor(M1h, M2h, Dh, Gh, Nh, B2h, basis.o1_hat)

    ode_form = None
    eliminated = False
    if basis.mode == "standard" and sys.k3 > 0 and (Nh.size == 0 or np.max(np.abs(Nh)) <= tol):
        ode_form = build_descriptor(
            M1h, M2h, Dh, Gh, np.zeros((0, M2h.shape[0])), B2h, basis.o1_hat
        )
        eliminated = True

    return ReducedSystem(
        M1h=M1h, M2h=M2h, Dh=Dh, Gh=Gh, Nh=Nh, B2h=B2h,
        o1_hat=basis.o1_hat, basis=basis, descriptor=full,
        ode_form=ode_form, multiplier_eliminated=eliminated,
    )


def project_initial_reduced(
    basis: ProjectionBasis,
    sys: FemSystem,
    x1_0: np.ndarray,
    x2_0: np.ndarray,
    enforce_mass: bool = False,
) -> tuple[np.ndarray, np.ndarray]:
    """Energy projection of full initial data onto the reduced spaces.

    z1 = M1h^{-1} V1' M1 x1, z2 = M2h^{-1} V2' M2 x2. With ``enforce_mass``
    the pressure coordinates additionally solve the equality-constrained
    least-squares problem that keeps the reduced mass o1_hat' M1h z1 equal
    to the full mass, at the price of a possible energy increase.
    """
    V1, V2 = basis.V1, basis.V2
    M1h = V1.T @ sys.M1 @ V1
    M2h = V2.T @ sys.M2 @ V2
    z1 = np.linalg.solve(M1h, V1.T @ (sys.M1 @ x1_0)) if V1.shape[1] else np.zeros(0)
    z2 = np.linalg.solve(M2h, V2.T @ (sys.M2 @ x2_0)) if V2.shape[1] else np.zeros(0)
    if enforce_mass:
        mass_full = float(sys.o1 @ (sys.M1 @ x1_0))
        c = M1h @ basis.o1_hat if basis.o1_hat.size else np.zeros(0)
        denom = float(basis.o1_hat @ c) if c.size else 0.0
        if denom <= 1e-14 * float(sys.o1 @ (sys.M1 @ sys.o1)):
            raise ValueError(
                "mass constraint is infeasible: the constant pressure direction "
                "is numerically orthogonal to the reduced space"
            )
        lam = (mass_full - float(c @ z1)) / denom
        z1 = z1 + lam * basis.o1_hat
    return z1, z2
