"""Dense linear-algebra kernels: SPD factorization, CG, DARE and discrete Lyapunov solvers.

Everything here operates on small dense matrices (state dimensions of a few,
parameter dimensions of a few dozen), so simple algorithms are preferred over
structure-preserving ones: textbook Cholesky with a pivot guard, plain
conjugate gradients, the Riccati fixed-point iteration, and a Kronecker
vectorization solve for the Lyapunov equation.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg as sla

from .errors import (
    DimensionMismatch,
    NoConvergence,
    NoStabilizingSolution,
    NotPositiveDefinite,
    UnstableClosedLoop,
)

# pivots below this fraction of the largest diagonal entry are treated as zero
_PIVOT_RTOL = 1e-14
# relative asymmetry tolerated in matrices required to be symmetric
_SYM_RTOL = 1e-10


@dataclass(frozen=True)
class SpdFactor:
    """Lower-triangular Cholesky factor L with H = L L^T."""

    L: np.ndarray

    @property
    def dim(self) -> int:
        return self.L.shape[0]


@dataclass(frozen=True)
class LinearOperator:
    """Matrix-free symmetric operator: dimension plus an apply callable."""

    dim: int
    apply: Callable[[np.ndarray], np.ndarray]

    @classmethod
    def from_matrix(cls, mat: np.ndarray) -> "LinearOperator":
        m = np.asarray(mat, dtype=float)
        return cls(dim=m.shape[0], apply=lambda v: m @ v)


def _check_square(mat: np.ndarray, name: str) -> np.ndarray:
    m = np.asarray(mat, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionMismatch(f"{name} must be square, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} has non-finite entries")
    return m


def _check_symmetric(mat: np.ndarray, name: str) -> np.ndarray:
    m = _check_square(mat, name)
    scale = max(1.0, float(np.abs(m).max(initial=0.0)))
    if np.abs(m - m.T).max(initial=0.0) > _SYM_RTOL * scale:
        raise ValueError(f"{name} is not symmetric")
    return m


def symmetrize(mat: np.ndarray) -> np.ndarray:
    """(X + X^T)/2; bitwise symmetric because float addition commutes."""
    return (mat + mat.T) / 2.0


def spectral_radius(mat: np.ndarray) -> float:
    return float(np.max(np.abs(np.linalg.eigvals(mat))))


def cholesky_factor(mat: np.ndarray) -> SpdFactor:
    """Factor a symmetric positive definite matrix as L L^T.

    Raises NotPositiveDefinite when a pivot falls at or below
    1e-14 times the largest diagonal entry.
    """
    h = _check_symmetric(mat, "matrix")
    n = h.shape[0]
    piv_floor = _PIVOT_RTOL * float(np.max(np.diag(h), initial=0.0))
    L = np.zeros_like(h)
    for j in range(n):
        d = h[j, j] - L[j, :j] @ L[j, :j]
        if d <= piv_floor:
            raise NotPositiveDefinite(
                f"pivot {d:.3e} at column {j} under floor {piv_floor:.3e}"
            )
        L[j, j] = np.sqrt(d)
        if j + 1 < n:
            L[j + 1 :, j] = (h[j + 1 :, j] - L[j + 1 :, :j] @ L[j, :j]) / L[j, j]
    return SpdFactor(L=L)


def solve_spd(factor: SpdFactor, rhs: np.ndarray) -> np.ndarray:
    """Solve H x = rhs given the Cholesky factor of H. rhs may be a vector or matrix."""
    r = np.asarray(rhs, dtype=float)
    if r.shape[0] != factor.dim:
        raise DimensionMismatch(
            f"rhs has leading dimension {r.shape[0]}, factor has {factor.dim}"
        )
    y = sla.solve_triangular(factor.L, r, lower=True)
    return sla.solve_triangular(factor.L.T, y, lower=False)


def cg_solve(
    op: LinearOperator,
    rhs: np.ndarray,
    tol: float = 1e-10,
    max_iter: int | None = None,
) -> np.ndarray:
    """Conjugate gradients for a symmetric positive definite operator, from x = 0.

    Returns x with ||op(x) - rhs|| <= tol * ||rhs||; raises NoConvergence
    (carrying the final residual norm) when the iteration budget runs out.
    """
    b = np.asarray(rhs, dtype=float)
    if b.shape != (op.dim,):
        raise DimensionMismatch(f"rhs shape {b.shape} does not match operator dim {op.dim}")
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return np.zeros_like(b)
    if max_iter is None:
        max_iter = 10 * op.dim

    x = np.zeros_like(b)
    r = b.copy()
    p = r.copy()
    rdotr = r @ r
    target = (tol * bnorm) ** 2
    for _ in range(max_iter):
        if rdotr <= target:
            break
        ap = op.apply(p)
        alpha = rdotr / (p @ ap)
        x += alpha * p
        r -= alpha * ap
        new_rdotr = r @ r
        p = r + (new_rdotr / rdotr) * p
        rdotr = new_rdotr
    true_res = float(np.linalg.norm(op.apply(x) - b))
    if true_res > tol * bnorm:
        raise NoConvergence(
            f"cg residual {true_res:.3e} above {tol * bnorm:.3e} after {max_iter} iterations",
            residual=true_res,
        )
    return x


def _dare_step(A, B, Q, R, P):
    apb = A.T @ P @ B
    gain = np.linalg.solve(R + B.T @ P @ B, apb.T)
    return symmetrize(Q + A.T @ P @ A - apb @ gain)


def solve_dare(
    A: np.ndarray,
    B: np.ndarray,
    Q: np.ndarray,
    R: np.ndarray,
    tol: float = 1e-12,
    max_iter: int = 10000,
) -> np.ndarray:
    """Stabilizing solution of P = Q + A'PA - A'PB (R + B'PB)^-1 B'PA.

    Fixed-point iteration from P = Q, symmetrizing every iterate; converged
    when the relative Frobenius step drops to tol. Raises NoStabilizingSolution
    when the iteration stalls or the implied closed loop is not stable.
    """
    A = _check_square(A, "A")
    n = A.shape[0]
    B = np.asarray(B, dtype=float)
    if B.ndim != 2 or B.shape[0] != n:
        raise DimensionMismatch(f"B shape {B.shape} incompatible with A shape {A.shape}")
    Q = _check_symmetric(Q, "Q")
    R = _check_symmetric(R, "R")
    if Q.shape[0] != n or R.shape[0] != B.shape[1]:
        raise DimensionMismatch("Q/R dimensions do not match A/B")
    cholesky_factor(R)  # R must be positive definite

    P = symmetrize(Q.copy())
    converged = False
    for _ in range(max_iter):
        P_new = _dare_step(A, B, Q, R, P)
        step = np.linalg.norm(P_new - P)
        P = P_new
        if step <= tol * max(np.linalg.norm(P), np.finfo(float).tiny):
            converged = True
            break
    if not converged:
        raise NoStabilizingSolution(
            f"riccati iteration did not converge in {max_iter} iterations"
        )
    gain = np.linalg.solve(R + B.T @ P @ B, B.T @ P @ A)
    if spectral_radius(A - B @ gain) >= 1.0:
        raise NoStabilizingSolution("closed loop from the Riccati fixed point is not stable")
    return P


def solve_dlyap(A_cl: np.ndarray, Sigma: np.ndarray) -> np.ndarray:
    """Solve X - A_cl X A_cl^T = Sigma for stable A_cl.

    Kronecker vectorization for state dimension at most 8 (the regime here);
    a squaring accumulation fallback above that. Output exactly symmetrized.
    """
    A = _check_square(A_cl, "A_cl")
    S = _check_symmetric(Sigma, "Sigma")
    n = A.shape[0]
    if S.shape[0] != n:
        raise DimensionMismatch("Sigma dimension does not match A_cl")
    if spectral_radius(A) >= 1.0 - 1e-9:
        raise UnstableClosedLoop("spectral radius of A_cl is not below one")

    if n * n <= 64:
        lhs = np.eye(n * n) - np.kron(A, A)
        x = np.linalg.solve(lhs, S.ravel(order="F")).reshape((n, n), order="F")
        return symmetrize(x)

    # doubling: X = sum_j A^j Sigma (A^T)^j accumulated in log steps
    X = S.copy()
    Apow = A.copy()
    for _ in range(200):
        incr = Apow @ X @ Apow.T
        X = X + incr
        if np.linalg.norm(incr) <= 1e-16 * max(np.linalg.norm(X), 1e-300):
            return symmetrize(X)
        Apow = Apow @ Apow
    raise NoConvergence("lyapunov accumulation did not converge", residual=None)
