"""Per-trajectory influence scores on the plug-in LQR cost, and their exact checks.

Three quantities per trajectory k:

* fixed-covariance score  zeta^T IF_m_k          (covariance held at Sigma),
* stochastic score        (zeta - h)^T IF_m_k + (T_k/M_k) Tr(P0 (W_hat - W_bar_k)),
* exact shift             dJ_k = Tr(P(theta_k) W_k) - Tr(P0 W_hat)  by refitting.

The amortized forms never materialize IF_m_k: with v = H^-1 rhs precomputed,
each score is (M/M_k) g_k^T v + (T_k/M_k) lam theta^T v plus the direct
covariance trace. The exact shift decomposes as

  dJ_k = (zeta - h)^T dtheta_k + direct_k + R_ric + R_w + R_cross,

an identity once the three remainders are computed by explicit subtraction;
diagnostics here evaluate all five terms and the computable remainder bounds.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from time import perf_counter

import numpy as np

from .errors import DominantTrajectory, NoStabilizingSolution
from .linalg import solve_dare
from .lqr import RiccatiArtifacts, riccati_artifacts
from .sysid import (
    ModelFit,
    TrajectoryDataset,
    covariance_direct_term,
    fit_ridge,
    loto_refit,
    model_influence,
)

SCORE_CSV_HEADER = [
    "k", "T_k", "if_fixed", "if_stoch", "delta_j_exact", "direct_trace",
    "r_ric", "r_w", "r_cross", "excluded_flag",
]


def _removal_weights(fit: ModelFit):
    T = fit.lengths.astype(float)
    M_rem = fit.M - T
    if np.any(M_rem == 0):
        raise DominantTrajectory(
            "a trajectory holds every transition; leave-one-out is undefined"
        )
    return fit.M / M_rem, T / M_rem


def direct_trace_term(fit: ModelFit, art: RiccatiArtifacts) -> np.ndarray:
    """(T_k/M_k) Tr(P0 (W_hat - W_bar_k)) for every k."""
    _, frac = _removal_weights(fit)
    tr0 = np.trace(art.P0 @ fit.W_hat)
    trk = np.einsum("ij,kji->k", art.P0, fit.per_traj_cov)
    return frac * (tr0 - trk)


def fixed_score(fit: ModelFit, art: RiccatiArtifacts, k: int) -> float:
    """Influence on Tr(P(theta) Sigma) with the covariance frozen at art.Sigma."""
    scale, frac = _removal_weights(fit)
    return float(scale[k] * (fit.g[k] @ art.v_fixed) + frac[k] * art.c_fixed)


def stochastic_score(fit: ModelFit, art: RiccatiArtifacts, k: int) -> float:
    """Influence on the full plug-in cost, covariance channel included."""
    scale, frac = _removal_weights(fit)
    direct = direct_trace_term(fit, art)
    return float(
        scale[k] * (fit.g[k] @ art.v_stoch) + frac[k] * art.c_stoch + direct[k]
    )


def score_all(fit: ModelFit, art: RiccatiArtifacts):
    """Vectorized scores for every trajectory: (if_fixed, if_stoch) arrays."""
    scale, frac = _removal_weights(fit)
    if_fixed = scale * (fit.g @ art.v_fixed) + frac * art.c_fixed
    if_stoch = scale * (fit.g @ art.v_stoch) + frac * art.c_stoch
    if_stoch = if_stoch + direct_trace_term(fit, art)
    return if_fixed, if_stoch


@dataclass(frozen=True)
class LotoRecord:
    """One exact removal: refit parameters, refit residual covariance, refit Riccati solution."""

    theta: np.ndarray
    W: np.ndarray
    P: np.ndarray | None   # None when the refit DARE has no stabilizing solution


def loto_record(data: TrajectoryDataset, lam: float, Q, R, k: int) -> LotoRecord:
    from .sysid import theta_to_ab

    theta_k, W_k = loto_refit(data, lam, k)
    A_k, B_k = theta_to_ab(theta_k, data.n_x, data.n_u)
    try:
        P_k = solve_dare(A_k, B_k, Q, R)
    except NoStabilizingSolution:
        P_k = None
    return LotoRecord(theta=theta_k, W=W_k, P=P_k)


def exact_loto_sweep(fit: ModelFit, Q, R) -> list[LotoRecord]:
    return [loto_record(fit.data, fit.lam, Q, R, k) for k in range(fit.N)]


def exact_loto_cost_shift(data: TrajectoryDataset, lam: float, Q, R, k: int) -> float:
    """dJ_k by exact refit: Tr(P(theta_k) W_k) - Tr(P0 W_hat)."""
    fit = fit_ridge(data, lam)
    P0 = solve_dare(fit.A, fit.B, Q, R)
    rec = loto_record(data, lam, Q, R, k)
    if rec.P is None:
        raise NoStabilizingSolution(f"refit without trajectory {k} is not stabilizable")
    return float(np.trace(rec.P @ rec.W) - np.trace(P0 @ fit.W_hat))


def data_extremes(fit: ModelFit):
    """(L_phi, L_e): largest regressor row norm and largest residual norm."""
    L_phi = float(np.linalg.norm(fit.data.Z, axis=1).max())
    L_e = float(np.linalg.norm(fit.residuals, axis=1).max())
    return L_phi, L_e


@dataclass(frozen=True)
class DecompositionDiagnostics:
    """Remainders of the exact cost-shift decomposition for one trajectory."""

    delta_theta_norm: float
    r_ric: float            # Riccati Taylor remainder traced against W_hat
    r_w: float              # Tr(P0 R_w) with R_w the covariance-shift remainder
    r_cross: float          # Tr((P_k - P0)(W_k - W_hat))
    bound_w: float          # L_phi^2 |dtheta|^2 + 4 (T_k/M) L_e L_phi |dtheta|
    bound_ric: float | None    # (L_psi/2) |dtheta|^2, needs caller-supplied L_psi
    bound_cross: float | None  # L_P |dtheta| (...), needs caller-supplied L_P


def diagnostics_from_record(
    fit: ModelFit,
    art: RiccatiArtifacts,
    k: int,
    rec: LotoRecord,
    L_psi: float | None = None,
    L_P: float | None = None,
) -> DecompositionDiagnostics:
    if rec.P is None:
        raise NoStabilizingSolution(f"refit without trajectory {k} is not stabilizable")
    dtheta = rec.theta - fit.theta
    nd = float(np.linalg.norm(dtheta))
    dP = rec.P - art.P0
    r_ric = float(np.trace(dP @ fit.W_hat) - art.zeta @ dtheta)

    T_k = float(fit.lengths[k])
    direct_mat = covariance_direct_term(fit, k)
    DW = rec.W - fit.W_hat
    # rows of D are Phi_s dtheta
    D = fit.data.Z @ dtheta.reshape(fit.q, fit.n_x)
    cross_mat = (fit.residuals.T @ D + D.T @ fit.residuals) / fit.M
    R_w_mat = DW - direct_mat + cross_mat
    r_w = float(np.trace(art.P0 @ R_w_mat))
    r_cross = float(np.trace(dP @ DW))

    L_phi, L_e = data_extremes(fit)
    bound_w = L_phi**2 * nd**2 + 4.0 * (T_k / fit.M) * L_e * L_phi * nd
    bound_ric = None if L_psi is None else 0.5 * L_psi * nd**2
    bound_cross = None
    if L_P is not None:
        frac = T_k / (fit.M - T_k)
        bound_cross = (
            L_P
            * nd
            * (
                frac * np.linalg.norm(fit.W_hat - fit.per_traj_cov[k])
                + 2.0 * L_e * L_phi * nd
                + np.linalg.norm(R_w_mat)
            )
        )
    return DecompositionDiagnostics(
        delta_theta_norm=nd,
        r_ric=r_ric,
        r_w=r_w,
        r_cross=r_cross,
        bound_w=bound_w,
        bound_ric=bound_ric,
        bound_cross=bound_cross,
    )


def decomposition_diagnostics(
    data: TrajectoryDataset,
    lam: float,
    Q,
    R,
    k: int,
    L_psi: float | None = None,
    L_P: float | None = None,
) -> DecompositionDiagnostics:
    """Exact refit for trajectory k plus all decomposition remainders and bounds."""
    fit = fit_ridge(data, lam)
    art = riccati_artifacts(fit, Q, R, fit.W_hat)
    rec = loto_record(data, lam, Q, R, k)
    return diagnostics_from_record(fit, art, k, rec, L_psi=L_psi, L_P=L_P)


def modular_error_bound(
    fit: ModelFit,
    art: RiccatiArtifacts,
    k: int,
    delta_theta_k: np.ndarray,
    diag: DecompositionDiagnostics,
) -> float:
    """Upper bound on |IF_stoch_k - dJ_k| from the surrogate gap and the remainders."""
    if_m = model_influence(fit, k)
    gap = float(np.linalg.norm(if_m - delta_theta_k))
    sens = float(np.linalg.norm(art.zeta - art.h))
    return sens * gap + abs(diag.r_ric) + abs(diag.r_w) + abs(diag.r_cross)


@dataclass
class ScoreTable:
    """Per-trajectory scores plus, when the exact sweep ran, the exact shifts and remainders."""

    lengths: np.ndarray
    if_fixed: np.ndarray
    if_stoch: np.ndarray
    direct_trace: np.ndarray
    delta_j_exact: np.ndarray | None = None   # nan where excluded
    r_ric: np.ndarray | None = None
    r_w: np.ndarray | None = None
    r_cross: np.ndarray | None = None
    excluded: np.ndarray | None = None        # bool, refit DARE failures
    diagnostics: list | None = None           # per-k DecompositionDiagnostics (None where excluded)
    score_time: float = 0.0
    refit_time: float | None = None

    @property
    def N(self) -> int:
        return len(self.if_fixed)

    def excluded_indices(self) -> list[int]:
        if self.excluded is None:
            return []
        return [int(i) for i in np.flatnonzero(self.excluded)]

    def to_csv(self, path) -> None:
        def cell(arr, i):
            if arr is None or not np.isfinite(arr[i]):
                return ""
            return format(float(arr[i]), ".17g")

        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(SCORE_CSV_HEADER)
            excl = (
                self.excluded
                if self.excluded is not None
                else np.zeros(self.N, dtype=bool)
            )
            for i in range(self.N):
                writer.writerow(
                    [
                        i,
                        int(self.lengths[i]),
                        format(float(self.if_fixed[i]), ".17g"),
                        format(float(self.if_stoch[i]), ".17g"),
                        cell(self.delta_j_exact, i),
                        format(float(self.direct_trace[i]), ".17g"),
                        cell(self.r_ric, i),
                        cell(self.r_w, i),
                        cell(self.r_cross, i),
                        int(excl[i]),
                    ]
                )


def build_score_table(
    fit: ModelFit,
    art: RiccatiArtifacts,
    Q=None,
    R=None,
    with_exact: bool = False,
) -> ScoreTable:
    """Score every trajectory; optionally run the exact removal sweep (needs Q, R)."""
    t0 = perf_counter()
    if_fixed, if_stoch = score_all(fit, art)
    direct = direct_trace_term(fit, art)
    score_time = perf_counter() - t0

    table = ScoreTable(
        lengths=fit.lengths.copy(),
        if_fixed=if_fixed,
        if_stoch=if_stoch,
        direct_trace=direct,
        score_time=score_time,
    )
    if not with_exact:
        return table
    if Q is None or R is None:
        raise ValueError("exact sweep needs Q and R")

    t0 = perf_counter()
    base_cost = float(np.trace(art.P0 @ fit.W_hat))
    N = fit.N
    delta_j = np.full(N, np.nan)
    r_ric = np.full(N, np.nan)
    r_w = np.full(N, np.nan)
    r_cross = np.full(N, np.nan)
    excluded = np.zeros(N, dtype=bool)
    diags: list = [None] * N
    for k, rec in enumerate(exact_loto_sweep(fit, Q, R)):
        if rec.P is None:
            excluded[k] = True
            continue
        delta_j[k] = float(np.trace(rec.P @ rec.W)) - base_cost
        diag = diagnostics_from_record(fit, art, k, rec)
        diags[k] = diag
        r_ric[k] = diag.r_ric
        r_w[k] = diag.r_w
        r_cross[k] = diag.r_cross
    table.delta_j_exact = delta_j
    table.r_ric = r_ric
    table.r_w = r_w
    table.r_cross = r_cross
    table.excluded = excluded
    table.diagnostics = diags
    table.refit_time = perf_counter() - t0
    return table
