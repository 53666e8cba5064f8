"""Descriptor form E x' + A x = B u with output y = B' x.

Wraps full-order and reduced systems in one block layout: the state splits
into pressure, flux and Lagrange components (k1, k2, k3) with

    E = blkdiag(M1, M2, 0),
    A = [[0, G, 0], [-G', D, -N'], [0, N, 0]],
    B = [0; B2; 0].

A = J + R with skew-symmetric J and positive semi-definite R =
blkdiag(0, D, 0), so the system is port-Hamiltonian. Linear solves are dense
LU with partial pivoting; a pencil counts as numerically singular when the
reciprocal condition estimate drops below 1e-12.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import LinAlgWarning, lu_factor, lu_solve, get_lapack_funcs

from .fem import FemSystem

__all__ = [
    "SingularPencilError",
    "DescriptorSystem",
    "MomentSequence",
    "from_fem",
    "solve_shifted",
    "shifted_solver",
    "steady_state",
    "moments",
    "transfer",
]

RCOND_SINGULAR = 1e-12


class SingularPencilError(RuntimeError):
    """A matrix or pencil is numerically singular (rcond below 1e-12)."""

    def __init__(self, message: str, rcond: float | None = None):
        super().__init__(message)
        self.rcond = rcond


def lu_with_rcond(matrix: np.ndarray, label: str):
    """Dense LU factorization plus reciprocal condition estimate.

    Raises SingularPencilError when the estimate is below 1e-12 or the
    factorization produces an exactly singular factor.
    """
    anorm = np.linalg.norm(matrix, 1) if matrix.size else 0.0
    if anorm == 0.0:
        raise SingularPencilError(f"{label} is the zero matrix", rcond=0.0)
    with warnings.catch_warnings():
        # an exactly singular factor is a reported outcome here, not a warning
        warnings.simplefilter("ignore", LinAlgWarning)
        lu, piv = lu_factor(matrix, check_finite=False)
    (gecon,) = get_lapack_funcs(("gecon",), (lu,))
    rcond, info = gecon(lu, anorm, norm="1")
    if info != 0:
        raise SingularPencilError(f"{label}: condition estimate failed", rcond=None)
    rcond = float(rcond)
    if not rcond >= RCOND_SINGULAR:
        raise SingularPencilError(
            f"{label} is numerically singular (rcond = {rcond:.3e})", rcond=rcond
        )
    return (lu, piv), rcond


@dataclass(frozen=True)
class DescriptorSystem:
    """Immutable descriptor system with structural block handles.

    ``o1`` carries the coordinates of the constant-one pressure in the
    system's own pressure space (the reduced representation for projected
    systems), which defines the mass functional o1' M1 x1.
    """

    E: np.ndarray
    A: np.ndarray
    B: np.ndarray
    block_dims: tuple[int, int, int]
    M1: np.ndarray
    M2: np.ndarray
    D: np.ndarray
    G: np.ndarray
    N: np.ndarray
    B2: np.ndarray
    o1: np.ndarray

    @property
    def n(self) -> int:
        return self.E.shape[0]

    @property
    def input_count(self) -> int:
        return self.B.shape[1]

    def split(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        k1, k2, _ = self.block_dims
        return x[:k1], x[k1 : k1 + k2], x[k1 + k2 :]

    def mass(self, x: np.ndarray) -> float:
        x1, _, _ = self.split(x)
        return float(self.o1 @ (self.M1 @ x1))

    def energy(self, x: np.ndarray) -> float:
        x1, x2, _ = self.split(x)
        return 0.5 * float(x1 @ (self.M1 @ x1) + x2 @ (self.M2 @ x2))

    def dissipation(self, x: np.ndarray) -> float:
        _, x2, _ = self.split(x)
        return float(x2 @ (self.D @ x2))

    def output(self, x: np.ndarray) -> np.ndarray:
        _, x2, _ = self.split(x)
        return self.B2.T @ x2

    def energy_norm(self, x: np.ndarray) -> float:
        """Seminorm induced by E (ignores the Lagrange component)."""
        return float(np.sqrt(max(x @ (self.E @ x), 0.0)))

    def restrict_inputs(self, indices) -> "DescriptorSystem":
        """System with B restricted to the given port columns."""
        idx = list(indices)
        return replace(self, B=self.B[:, idx].copy(), B2=self.B2[:, idx].copy())


def build_descriptor(
    M1: np.ndarray,
    M2: np.ndarray,
    D: np.ndarray,
    G: np.ndarray,
    N: np.ndarray,
    B2: np.ndarray,
    o1: np.ndarray,
) -> DescriptorSystem:
    """Assemble the standard block layout from the individual blocks."""
    k1, k2 = G.shape
    k3 = N.shape[0]
    E = np.zeros((k1 + k2 + k3, k1 + k2 + k3))
    E[:k1, :k1] = M1
    E[k1 : k1 + k2, k1 : k1 + k2] = M2
    A = np.zeros_like(E)
    A[:k1, k1 : k1 + k2] = G
    A[k1 : k1 + k2, :k1] = -G.T
    A[k1 : k1 + k2, k1 : k1 + k2] = D
    A[k1 : k1 + k2, k1 + k2 :] = -N.T
    A[k1 + k2 :, k1 : k1 + k2] = N
    B = np.zeros((k1 + k2 + k3, B2.shape[1]))
    B[k1 : k1 + k2] = B2
    return DescriptorSystem(
        E=E, A=A, B=B, block_dims=(k1, k2, k3),
        M1=M1, M2=M2, D=D, G=G, N=N, B2=B2, o1=np.asarray(o1, dtype=float),
    )


def from_fem(sys: FemSystem) -> DescriptorSystem:
    """Descriptor form of an assembled full-order model."""
    return build_descriptor(sys.M1, sys.M2, sys.D, sys.G, sys.N, sys.B2, sys.o1)


def shifted_solver(sys: DescriptorSystem, s0: float):
    """Factorize s0*E + A once and return a solve callable for many rhs."""
    pencil = s0 * sys.E + sys.A
    lu, _ = lu_with_rcond(pencil, f"pencil {s0}*E + A")

    def solve(rhs: np.ndarray) -> np.ndarray:
        return lu_solve(lu, rhs, check_finite=False)

    return solve


def solve_shifted(sys: DescriptorSystem, s0: float, rhs: np.ndarray) -> np.ndarray:
    """Solve (s0*E + A) x = rhs for a vector or block right-hand side."""
    return shifted_solver(sys, s0)(np.asarray(rhs, dtype=float))


def steady_state(sys: DescriptorSystem, u_const: np.ndarray) -> np.ndarray:
    """Stationary state A xbar = B u for a constant input vector."""
    try:
        lu, _ = lu_with_rcond(sys.A, "A")
    except SingularPencilError as exc:
        raise SingularPencilError(
            f"no unique steady state: {exc}", rcond=exc.rcond
        ) from exc
    u = np.atleast_1d(np.asarray(u_const, dtype=float))
    return lu_solve(lu, sys.B @ u, check_finite=False)


@dataclass(frozen=True)
class MomentSequence:
    """Moments m_l = B' r_l of the expansion H(s) = sum_l m_l (s0 - s)^l."""

    s0: float
    moments: tuple[np.ndarray, ...]
    krylov_vectors: tuple[np.ndarray, ...]


def moments(sys: DescriptorSystem, s0: float, count: int) -> MomentSequence:
    """Moment recursion: (s0 E + A) r_0 = B, (s0 E + A) r_l = E r_{l-1}."""
    if count < 1:
        raise ValueError("count must be a positive integer")
    solve = shifted_solver(sys, s0)
    vectors, mom = [], []
    r = solve(sys.B)
    for _ in range(count):
        vectors.append(r)
        mom.append(sys.B.T @ r)
        r = solve(sys.E @ r)
    return MomentSequence(s0=float(s0), moments=tuple(mom), krylov_vectors=tuple(vectors))


def transfer(sys: DescriptorSystem, s) -> np.ndarray:
    """Transfer function H(s) = B' (s E + A)^{-1} B, real or complex s."""
    pencil = s * sys.E + sys.A  # promotes to complex for complex s
    anorm = np.linalg.norm(pencil, 1)
    if anorm == 0.0:
        raise SingularPencilError(f"pencil {s}*E + A is the zero matrix", rcond=0.0)
    lu, piv = lu_factor(pencil, check_finite=False)
    (gecon,) = get_lapack_funcs(("gecon",), (lu,))
    rcond, info = gecon(lu, anorm, norm="1")
    if info != 0 or not float(rcond) >= RCOND_SINGULAR:
        raise SingularPencilError(
            f"pencil {s}*E + A is numerically singular", rcond=float(rcond)
        )
    return sys.B.T @ lu_solve((lu, piv), sys.B, check_finite=False)
