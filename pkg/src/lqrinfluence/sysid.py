"""Ridge least-squares identification of (A, B) from trajectory data.

Parameters are the column-major stacking theta = vec([A B]) and the per-step
regressor is Phi_s = z_s^T kron I_nx with z_s = (x_s; u_s), so the ridge
objective (1/2M) sum ||x_s+ - Phi_s theta||^2 + (lam/2) ||theta||^2 reduces to
normal equations on the (n_x + n_u)-dimensional Gram matrix of the z_s. The
full Hessian is (G + lam I) kron I_nx; it is never assembled per transition.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, DominantTrajectory, SingleTrajectory
from .linalg import LinearOperator, SpdFactor, cg_solve, cholesky_factor, solve_spd, symmetrize


@dataclass(frozen=True)
class Transition:
    """One recorded step (x, u, x_next)."""

    x: np.ndarray
    u: np.ndarray
    x_next: np.ndarray


@dataclass(frozen=True)
class TrajectoryDataset:
    """Trajectories stored as stacked transition arrays plus boundary offsets.

    Trajectory k owns rows offsets[k]:offsets[k+1] of states/inputs/next_states.
    """

    n_x: int
    n_u: int
    states: np.ndarray       # (M, n_x)
    inputs: np.ndarray       # (M, n_u)
    next_states: np.ndarray  # (M, n_x)
    offsets: np.ndarray      # (N+1,) int

    def __post_init__(self):
        M = self.states.shape[0]
        if self.states.shape != (M, self.n_x) or self.next_states.shape != (M, self.n_x):
            raise DimensionMismatch("state arrays do not match n_x")
        if self.inputs.shape != (M, self.n_u):
            raise DimensionMismatch("input array does not match n_u")
        if self.offsets[0] != 0 or self.offsets[-1] != M:
            raise DimensionMismatch("offsets do not cover the transition rows")
        if np.any(np.diff(self.offsets) < 1):
            raise DimensionMismatch("every trajectory needs at least one transition")
        for arr in (self.states, self.inputs, self.next_states):
            if not np.all(np.isfinite(arr)):
                raise ValueError("dataset has non-finite entries")

    @classmethod
    def from_arrays(cls, trajectories, n_x=None, n_u=None):
        """Build from a sequence of (X, U, X_next) array triples."""
        xs, us, xn = [], [], []
        for X, U, Xn in trajectories:
            xs.append(np.atleast_2d(np.asarray(X, dtype=float)))
            us.append(np.atleast_2d(np.asarray(U, dtype=float)))
            xn.append(np.atleast_2d(np.asarray(Xn, dtype=float)))
        if n_x is None:
            n_x = xs[0].shape[1]
        if n_u is None:
            n_u = us[0].shape[1]
        lengths = [x.shape[0] for x in xs]
        offsets = np.concatenate([[0], np.cumsum(lengths)])
        return cls(
            n_x=n_x,
            n_u=n_u,
            states=np.vstack(xs),
            inputs=np.vstack(us),
            next_states=np.vstack(xn),
            offsets=offsets,
        )

    @classmethod
    def from_transitions(cls, trajectories):
        """Build from a sequence of trajectories, each a sequence of Transition."""
        triples = []
        for traj in trajectories:
            X = np.array([t.x for t in traj], dtype=float)
            U = np.array([t.u for t in traj], dtype=float)
            Xn = np.array([t.x_next for t in traj], dtype=float)
            triples.append((X, U, Xn))
        return cls.from_arrays(triples)

    @property
    def M(self) -> int:
        return self.states.shape[0]

    @property
    def N(self) -> int:
        return len(self.offsets) - 1

    @property
    def lengths(self) -> np.ndarray:
        return np.diff(self.offsets)

    @property
    def Z(self) -> np.ndarray:
        """Stacked regression inputs z_s = (x_s; u_s), shape (M, n_x + n_u)."""
        return np.hstack([self.states, self.inputs])

    def traj_slice(self, k: int) -> slice:
        if not 0 <= k < self.N:
            raise IndexError(f"trajectory index {k} out of range for N={self.N}")
        return slice(int(self.offsets[k]), int(self.offsets[k + 1]))


def _emit_floats(arr) -> str:
    # %.17g guarantees exact binary64 round-trip through decimal
    return "[" + ", ".join(format(float(v), ".17g") for v in arr) + "]"


def save_dataset(data: TrajectoryDataset, path) -> None:
    """Write the dataset as JSON with 17-significant-digit floats."""
    lines = ['{"n_x": %d, "n_u": %d, "trajectories": [' % (data.n_x, data.n_u)]
    for k in range(data.N):
        sl = data.traj_slice(k)
        rows = []
        for s in range(sl.start, sl.stop):
            rows.append(
                '{"x": %s, "u": %s, "x_next": %s}'
                % (
                    _emit_floats(data.states[s]),
                    _emit_floats(data.inputs[s]),
                    _emit_floats(data.next_states[s]),
                )
            )
        tail = "," if k + 1 < data.N else ""
        lines.append("[" + ", ".join(rows) + "]" + tail)
    lines.append("]}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_dataset(path) -> TrajectoryDataset:
    """Read a dataset written by save_dataset, validating dimensions."""
    with open(path) as fh:
        doc = json.load(fh)
    try:
        n_x, n_u = int(doc["n_x"]), int(doc["n_u"])
        trajs = doc["trajectories"]
    except (KeyError, TypeError) as exc:
        raise DimensionMismatch(f"malformed dataset file: {exc}") from exc
    triples = []
    for traj in trajs:
        X = np.array([t["x"] for t in traj], dtype=float)
        U = np.array([t["u"] for t in traj], dtype=float)
        Xn = np.array([t["x_next"] for t in traj], dtype=float)
        if X.shape[1] != n_x or Xn.shape[1] != n_x or U.shape[1] != n_u:
            raise DimensionMismatch("transition entries disagree with declared n_x/n_u")
        triples.append((X, U, Xn))
    return TrajectoryDataset.from_arrays(triples, n_x=n_x, n_u=n_u)


def theta_to_ab(theta: np.ndarray, n_x: int, n_u: int):
    """Unstack theta = vec([A B]) (column-major) into (A, B)."""
    q = n_x + n_u
    mat = np.asarray(theta, dtype=float).reshape(q, n_x).T
    return mat[:, :n_x].copy(), mat[:, n_x:].copy()


def ab_to_theta(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    return np.hstack([A, B]).ravel(order="F")


def build_regressor(x: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Per-step regressor Phi = z^T kron I_nx with z = (x; u), so Phi theta = A x + B u."""
    z = np.concatenate([np.asarray(x, float).ravel(), np.asarray(u, float).ravel()])
    n_x = np.asarray(x).size
    return np.kron(z[None, :], np.eye(n_x))


@dataclass(frozen=True)
class ModelFit:
    """Ridge fit with the cached pieces every influence quantity reads.

    Immutable after construction; per-trajectory gradients g, residual
    covariances, and the Hessian factor are computed once here so scoring a
    trajectory is a handful of dot products.
    """

    data: TrajectoryDataset
    lam: float
    theta: np.ndarray          # (p,)
    gram: np.ndarray           # (q, q), (1/M) Z^T Z
    hessian: np.ndarray        # (p, p) dense (G + lam I) kron I_nx
    hessian_factor: SpdFactor
    residuals: np.ndarray      # (M, n_x), e_s = x_s+ - [A B] z_s
    W_hat: np.ndarray          # (n_x, n_x)
    per_traj_cov: np.ndarray   # (N, n_x, n_x), rows W_bar_k
    g: np.ndarray              # (N, p), per-trajectory loss gradients

    @property
    def n_x(self) -> int:
        return self.data.n_x

    @property
    def n_u(self) -> int:
        return self.data.n_u

    @property
    def q(self) -> int:
        return self.n_x + self.n_u

    @property
    def p(self) -> int:
        return self.theta.size

    @property
    def M(self) -> int:
        return self.data.M

    @property
    def N(self) -> int:
        return self.data.N

    @property
    def lengths(self) -> np.ndarray:
        return self.data.lengths

    @property
    def A(self) -> np.ndarray:
        return theta_to_ab(self.theta, self.n_x, self.n_u)[0]

    @property
    def B(self) -> np.ndarray:
        return theta_to_ab(self.theta, self.n_x, self.n_u)[1]

    def hessian_matvec(self, v: np.ndarray) -> np.ndarray:
        """H v through the Gram structure, never materializing per-step regressors."""
        V = np.asarray(v, dtype=float).reshape(self.q, self.n_x)
        return ((self.gram + self.lam * np.eye(self.q)) @ V).ravel()

    def hessian_operator(self) -> LinearOperator:
        return LinearOperator(dim=self.p, apply=self.hessian_matvec)


def fit_ridge(data: TrajectoryDataset, lam: float) -> ModelFit:
    """Solve the ridge normal equations and cache residual/gradient structure.

    lam = 0 is allowed only when the Gram matrix is positive definite
    (NotPositiveDefinite otherwise).
    """
    if lam < 0:
        raise ValueError("ridge weight must be nonnegative")
    Z = data.Z
    Y = data.next_states
    M = data.M
    n_x, q = data.n_x, data.n_x + data.n_u

    gram = symmetrize(Z.T @ Z / M)
    gram_lam = gram + lam * np.eye(q)
    gram_factor = cholesky_factor(gram_lam)
    Theta = solve_spd(gram_factor, Z.T @ Y / M)   # (q, n_x)
    theta = Theta.ravel()
    E = Y - Z @ Theta

    hessian = np.kron(gram_lam, np.eye(n_x))
    hessian_factor = cholesky_factor(hessian)

    N = data.N
    per_traj_cov = np.empty((N, n_x, n_x))
    g = np.empty((N, q * n_x))
    cov_sum = np.zeros((n_x, n_x))
    for k in range(N):
        sl = data.traj_slice(k)
        Ek, Zk = E[sl], Z[sl]
        Ck = symmetrize(Ek.T @ Ek)
        cov_sum += Ck
        per_traj_cov[k] = Ck / data.lengths[k]
        g[k] = -(Zk.T @ Ek).ravel() / M
    W_hat = cov_sum / M

    return ModelFit(
        data=data,
        lam=float(lam),
        theta=theta,
        gram=gram,
        hessian=hessian,
        hessian_factor=hessian_factor,
        residuals=E,
        W_hat=W_hat,
        per_traj_cov=per_traj_cov,
        g=g,
    )


def stationarity_residual(fit: ModelFit) -> float:
    """Norm of the ridge optimality condition -(1/M) sum Phi^T e + lam theta."""
    grad = -(fit.data.Z.T @ fit.residuals).ravel() / fit.M + fit.lam * fit.theta
    return float(np.linalg.norm(grad))


def trajectory_gradient(fit: ModelFit, k: int) -> np.ndarray:
    """g_k = -(1/M) sum over trajectory k of Phi_s^T e_s."""
    if not 0 <= k < fit.N:
        raise IndexError(f"trajectory index {k} out of range for N={fit.N}")
    return fit.g[k].copy()


def eta(fit: ModelFit, k: int) -> np.ndarray:
    """Removal direction eta_k = (M/M_k) g_k + (T_k/M_k) lam theta, M_k = M - T_k."""
    gk = trajectory_gradient(fit, k)
    T_k = int(fit.lengths[k])
    M_rem = fit.M - T_k
    if M_rem == 0:
        raise DominantTrajectory(
            "trajectory holds every transition; leave-one-out is undefined"
        )
    return (fit.M / M_rem) * gk + (T_k / M_rem) * fit.lam * fit.theta


def model_influence(fit: ModelFit, k: int, solver: str = "dense",
                    cg_tol: float = 1e-10) -> np.ndarray:
    """First-order surrogate for the leave-one-out parameter shift: H^-1 eta_k."""
    rhs = eta(fit, k)
    if solver == "dense":
        return solve_spd(fit.hessian_factor, rhs)
    if solver == "cg":
        return cg_solve(fit.hessian_operator(), rhs, tol=cg_tol)
    raise ValueError(f"unknown solver {solver!r}")


def loto_refit(data: TrajectoryDataset, lam: float, k: int):
    """Exact refit with trajectory k removed, loss renormalized by 1/(M - T_k).

    The ridge penalty keeps weight lam. Returns (theta, W): the refit
    parameters and the covariance of the refit residuals over the retained
    transitions.
    """
    if data.N < 2:
        raise SingleTrajectory("need at least two trajectories to remove one")
    sl = data.traj_slice(k)
    keep = np.ones(data.M, dtype=bool)
    keep[sl] = False
    Z = data.Z[keep]
    Y = data.next_states[keep]
    M_rem = Z.shape[0]
    q = data.n_x + data.n_u

    gram = symmetrize(Z.T @ Z / M_rem) + lam * np.eye(q)
    Theta = solve_spd(cholesky_factor(gram), Z.T @ Y / M_rem)
    E = Y - Z @ Theta
    W = symmetrize(E.T @ E) / M_rem
    return Theta.ravel(), W


def covariance_direct_term(fit: ModelFit, k: int) -> np.ndarray:
    """Covariance shift from removal alone: (T_k/M_k) (W_hat - W_bar_k)."""
    if not 0 <= k < fit.N:
        raise IndexError(f"trajectory index {k} out of range for N={fit.N}")
    T_k = int(fit.lengths[k])
    M_rem = fit.M - T_k
    if M_rem == 0:
        raise DominantTrajectory(
            "trajectory holds every transition; leave-one-out is undefined"
        )
    return (T_k / M_rem) * (fit.W_hat - fit.per_traj_cov[k])
