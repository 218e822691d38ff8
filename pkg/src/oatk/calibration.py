"""Conditional calibration of OATK through compound e-values.

For a null feature ``j`` the pair ``G_j = (X_{-j}^T y, ||y||^2)`` is
sufficient, and ``y | G_j`` is uniform on a sphere: the projection of ``y``
onto ``col(X_{-j})`` is fixed and the rest is a uniformly oriented vector of
fixed length in the ``(n - p + 1)``-dimensional complement.  Resampling from
that law and rerunning OATK gives a Monte Carlo estimate of the calibration
function ``phi_j``; features whose estimate is non-positive receive a
non-zero e-value, and eBH turns the e-values into a rejection set.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _rng
from .exceptions import DimensionError, NegativeBudget
from .knockoffs import make_plan, residual_norm
from .linalg import DesignMatrix, as_design, default_lambda_grid, loocv_sse_batch
from .procedure import oatk_select
from .selection import SelectionResult, bh, ebh, knockoff_threshold, ols_t_pvalues

_BUDGET_TOL = 1e-10


@dataclass(frozen=True)
class CalibrationConfig:
    """Monte Carlo and threshold settings.

    ``beta_level`` defaults to the target FDR.  ``offset`` is the ``c`` used
    both in the inner threshold and in the e-value denominators; it must be
    positive for the e-values to stay finite.
    """

    mc_replicates: int = 200
    beta_level: float | None = None
    offset: float = 1.0
    candidate_rule: str = "fast"
    lambdas: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.mc_replicates < 1:
            raise ValueError("mc_replicates must be at least 1")
        if self.beta_level is not None and not 0.0 < self.beta_level < 1.0:
            raise ValueError(f"beta_level must lie in (0, 1), got {self.beta_level}")
        if self.candidate_rule not in ("fast", "full"):
            raise ValueError(f"candidate_rule must be 'fast' or 'full', got {self.candidate_rule!r}")
        if self.offset < 0:
            raise ValueError("offset must be non-negative")

    def level(self, alpha: float) -> float:
        return alpha if self.beta_level is None else self.beta_level


@dataclass(frozen=True)
class SufficientStatistic:
    j: int
    xty_minus_j: np.ndarray
    y_norm_sq: float


def sufficient_statistic(X: DesignMatrix, y, j: int) -> SufficientStatistic:
    X = as_design(X)
    y = np.asarray(y, dtype=float)
    if y.shape != (X.n,):
        raise DimensionError(f"response has shape {y.shape}, expected ({X.n},)")
    others = np.delete(X.values, j, axis=1)
    return SufficientStatistic(int(j), others.T @ y, float(y @ y))


def _fitted_from_statistic(X: DesignMatrix, stat: SufficientStatistic) -> np.ndarray:
    """``P_{-j} y`` reconstructed from ``X_{-j}^T y`` alone."""
    others = np.delete(X.values, stat.j, axis=1)
    if others.shape[1] == 0:
        return np.zeros(X.n)
    coef = np.linalg.solve(others.T @ others, stat.xty_minus_j)
    return others @ coef


def residual_budget(X: DesignMatrix, stat: SufficientStatistic) -> float:
    """``||y||^2 - ||P_{-j} y||^2``; tiny negative rounding is reported as 0."""
    fitted = _fitted_from_statistic(X, stat)
    budget = stat.y_norm_sq - float(fitted @ fitted)
    if budget < 0:
        if budget < -_BUDGET_TOL * max(1.0, stat.y_norm_sq):
            raise NegativeBudget(f"residual budget {budget:.3e} is negative")
        budget = 0.0
    return budget


def _complement_directions(X: DesignMatrix, j: int, H: np.ndarray) -> np.ndarray:
    """Project the columns of ``H`` off ``col(X_{-j})`` and normalize them."""
    U = X.svd.U
    u = X.partial_residuals[:, j] / np.sqrt(X.partial_residuals[:, j] @ X.partial_residuals[:, j])
    for _ in range(2):
        H = H - U @ (U.T @ H) + np.outer(u, u @ H)
    return H / np.linalg.norm(H, axis=0)


def _sample_batch(X: DesignMatrix, stat: SufficientStatistic, B: int, rng: np.random.Generator) -> np.ndarray:
    fitted = _fitted_from_statistic(X, stat)
    budget = residual_budget(X, stat)
    if budget == 0.0:
        return np.repeat(fitted[:, None], B, axis=1)
    V = _complement_directions(X, stat.j, rng.standard_normal((X.n, B)))
    return fitted[:, None] + np.sqrt(budget) * V


def sample_y_given_statistic(X: DesignMatrix, stat: SufficientStatistic, seed=None) -> np.ndarray:
    """One draw ``y'`` with the same ``X_{-j}^T y'`` and ``||y'||^2`` as the observed response."""
    X = as_design(X)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return _sample_batch(X, stat, 1, rng)[:, 0]


class _BatchOATK:
    """OATK statistics for many responses on one design, vectorized over responses.

    Each response gets its own LOOCV-selected penalty.  Only ``r_j^T y``
    enters the statistics; for ``r_j`` uniform on the unit sphere of
    ``col(X)^perp`` (dimension ``k = n - p``) that inner product is
    ``||P_perp y|| * g / sqrt(g^2 + chi2_{k-1})`` with independent ``g`` and
    chi-square, so it is drawn directly instead of materializing ``r_j``.
    """

    def __init__(self, X: DesignMatrix, s: np.ndarray, lambdas=None):
        self.X = X
        self.s = s
        self.lambdas = np.sort(default_lambda_grid() if lambdas is None else np.asarray(lambdas, float))
        d, V = X.svd.d, X.svd.V
        self.inv_diag = (V**2) @ (1.0 / (d[:, None] ** 2 + self.lambdas[None, :]))  # (p, L)
        sigma_sq = 1.0 / ((V**2) @ (1.0 / d**2))
        self.rho = residual_norm(s, sigma_sq)
        self.k = X.n - X.p
        if self.k < 1:
            raise DimensionError("calibration needs n > p")

    def w(self, Y: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """W statistics, shape (B, p)."""
        X = self.X
        U, d, V = X.svd.U, X.svd.d, X.svd.V
        B = Y.shape[1]
        sse = loocv_sse_batch(X.svd, Y, self.lambdas)
        idx = np.argmin(np.where(np.isnan(sse), np.inf, sse), axis=0)
        lam = self.lambdas[idx]
        C = U.T @ Y
        beta_ridge = V @ (d[:, None] / (d[:, None] ** 2 + lam[None, :]) * C)
        beta_ols = V @ (C / d[:, None])
        inv_diag = self.inv_diag[:, idx]
        perp = np.sqrt(np.maximum(np.sum(Y**2, axis=0) - np.sum(C**2, axis=0), 0.0))
        g = rng.standard_normal((X.p, B))
        if self.k > 1:
            chi = rng.chisquare(self.k - 1, size=(X.p, B))
            cos = g / np.sqrt(g**2 + chi)
        else:
            cos = np.sign(g)
        beta_tilde = beta_ridge - inv_diag * self.s[:, None] * beta_ols + inv_diag * self.rho[:, None] * perp * cos
        a, b = np.abs(beta_ridge), np.abs(beta_tilde)
        return np.where(a >= b, a, -b).T


def phi_terms(w_prime: np.ndarray, t_prime: np.ndarray, j: int, t: float, offset: float) -> np.ndarray:
    """Per-replicate value of the bracket whose mean estimates ``phi_j(t)``.

    Parameters
    ----------
    w_prime : ndarray, shape (B, p)
    t_prime : ndarray, shape (B,)
        Thresholds at level ``beta`` of each row (``inf`` when nothing is selected).
    """
    w_prime = np.atleast_2d(np.asarray(w_prime, dtype=float))
    t_prime = np.atleast_1d(np.asarray(t_prime, dtype=float))
    n_neg = np.sum(w_prime <= -t_prime[:, None], axis=1)
    hit = t * w_prime[:, j] >= t_prime
    neg_j = w_prime[:, j] <= -t_prime
    denom = offset + n_neg
    with np.errstate(divide="ignore", invalid="ignore"):
        first = np.where(hit, 1.0 / denom, 0.0)
        second = np.where(n_neg > 0, neg_j / np.maximum(n_neg, 1), 0.0)
    return first - second


def _mc_phi(engine: _BatchOATK, stat, level, offset, t, B, rng) -> float:
    Y = _sample_batch(engine.X, stat, B, rng)
    W = engine.w(Y, rng)
    T = np.array([knockoff_threshold(row, level, offset).threshold for row in W])
    return float(np.mean(phi_terms(W, T, stat.j, t, offset)))


def phi_j(X: DesignMatrix, y, j: int, t: float, cfg: CalibrationConfig, seed=None, alpha: float = 0.1, s=None) -> float:
    """Monte Carlo estimate of ``phi_j(t; G_j)`` with ``cfg.mc_replicates`` draws."""
    X = as_design(X)
    engine = _BatchOATK(X, make_plan(X, s=s, seed=0).s, cfg.lambdas)
    rng = _rng.stream(_rng.resolve_seed(seed), _rng.CALIBRATION, j)
    stat = sufficient_statistic(X, y, j)
    return _mc_phi(engine, stat, cfg.level(alpha), cfg.offset, t, cfg.mc_replicates, rng)


def fast_candidate_set(X: DesignMatrix, y, alpha: float, w, base: SelectionResult) -> np.ndarray:
    """Features worth calibrating: strong t-tests, large ``|W|``, or already selected.

    ``(BH(4 alpha) and {p_j <= alpha/2}) | {|W_j| >= min(w_(p-k), T_alpha)} | base``
    where ``k`` is the size of the first set and ``w_(i)`` are the ascending
    order statistics of ``|W|``.
    """
    X = as_design(X)
    w = np.asarray(w, dtype=float)
    p = w.size
    pv = ols_t_pvalues(X, y)
    if 4 * alpha < 1:
        bh_set = set(bh(pv, 4 * alpha).rejected.tolist())
    else:
        bh_set = set(range(p))
    strong = {j for j in bh_set if pv[j] <= alpha / 2}
    k = len(strong)
    mags = np.sort(np.abs(w))
    order_stat = mags[p - k - 1] if p - k >= 1 else -np.inf
    cut = min(order_stat, base.threshold)
    kn = set(np.flatnonzero(np.abs(w) >= cut).tolist())
    return np.array(sorted(strong | kn | base.as_set()), dtype=int)


@dataclass(frozen=True)
class EValueVector:
    e: np.ndarray
    beta_level: float
    offset: float
    candidates: np.ndarray
    phi: dict
    w: np.ndarray
    threshold: float

    @property
    def total(self) -> float:
        return float(np.sum(self.e))


def calibrated_evalues(X, y, alpha: float = 0.1, cfg: CalibrationConfig | None = None, seed=None, s=None) -> EValueVector:
    """Compound e-values from one OATK run at level ``beta`` plus per-feature calibration.

    ``phi_j`` is evaluated once, at ``t = T_beta / W_j``: a non-positive
    estimate gives ``e_j = p / (c + #{W <= -T_beta})``, otherwise ``e_j = 0``.
    Features with ``W_j <= 0``, and with the fast rule features outside
    :func:`fast_candidate_set`, get ``e_j = 0`` without simulation.
    """
    cfg = CalibrationConfig() if cfg is None else cfg
    X = as_design(X)
    y = np.asarray(y, dtype=float)
    seed = _rng.resolve_seed(seed)
    level = cfg.level(alpha)
    base = oatk_select(X, y, level, offset=cfg.offset, lambdas=cfg.lambdas, s=s, seed=seed)
    W, T = base.w, base.selection.threshold
    p = X.p
    e = np.zeros(p)
    if cfg.candidate_rule == "fast":
        basic = knockoff_threshold(W, alpha, 0.0)
        cand = fast_candidate_set(X, y, alpha, W, basic)
    else:
        cand = np.arange(p)
    cand = np.array([j for j in cand if W[j] > 0], dtype=int)
    phis = {}
    if np.isfinite(T) and cand.size:
        n_neg = int(np.sum(W <= -T))
        denom = cfg.offset + n_neg
        value = p / denom if denom > 0 else np.inf
        engine = _BatchOATK(X, base.context.s, cfg.lambdas)
        for j in cand:
            rng = _rng.stream(seed, _rng.CALIBRATION, int(j))
            stat = sufficient_statistic(X, y, int(j))
            phi = _mc_phi(engine, stat, level, cfg.offset, T / W[j], cfg.mc_replicates, rng)
            phis[int(j)] = phi
            if phi <= 0:
                e[j] = value
    return EValueVector(e, level, cfg.offset, cand, phis, W, T)


@dataclass(frozen=True)
class CalibratedResult:
    selection: SelectionResult
    evalues: EValueVector
    seed: int


def calibrated_oatk(X, y, alpha: float = 0.1, cfg: CalibrationConfig | None = None, seed=None, s=None) -> CalibratedResult:
    """Conditionally calibrated OATK: e-values followed by eBH at level ``alpha``."""
    seed = _rng.resolve_seed(seed)
    ev = calibrated_evalues(X, y, alpha, cfg, seed, s)
    sel = ebh(ev.e, alpha)
    return CalibratedResult(SelectionResult(sel.rejected, sel.threshold, alpha, "coatk", sel.n_features), ev, seed)
