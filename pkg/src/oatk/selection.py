"""Rejection rules: knockoff threshold, SeqStep+, eBH, BH and derandomization."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import stats

from .exceptions import DimensionError, GammaOutOfRange
from .linalg import DesignMatrix, as_design, ols_fit
from .statistics import PValueVector


@dataclass(frozen=True)
class SelectionResult:
    """Rejected indices (sorted, 0-based) and the cutoff that produced them.

    ``threshold`` is ``T_alpha`` for knockoff-style rules (``inf`` when
    nothing is selected), ``k_hat`` for SeqStep+ and eBH (0 when nothing is
    selected) and the p-value cutoff for BH.
    """

    rejected: np.ndarray
    threshold: float
    alpha: float
    method: str
    n_features: int

    def as_set(self) -> set[int]:
        return {int(j) for j in self.rejected}


def _check_alpha(alpha: float) -> None:
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")


def threshold_ratio(w: np.ndarray, t: float, offset: float = 0.0) -> float:
    """``(c + #{W <= -t}) / max(1, #{W >= t})``."""
    w = np.asarray(w, dtype=float)
    return (offset + np.sum(w <= -t)) / max(1, int(np.sum(w >= t)))


def knockoff_threshold(w, alpha: float, offset: float = 0.0) -> SelectionResult:
    """Smallest ``t`` among the nonzero ``|W_j|`` whose FDP estimate is at most ``alpha``."""
    _check_alpha(alpha)
    w = np.asarray(w, dtype=float)
    cand = np.unique(np.abs(w[w != 0]))
    T = np.inf
    if cand.size:
        srt = np.sort(w)
        n_neg = np.searchsorted(srt, -cand, side="right")  # #{W <= -t}
        n_pos = w.size - np.searchsorted(srt, cand, side="left")  # #{W >= t}
        ok = (offset + n_neg) / np.maximum(1, n_pos) <= alpha
        if ok.any():
            T = float(cand[np.argmax(ok)])
    rejected = np.flatnonzero(w >= T)
    return SelectionResult(rejected, T, alpha, "knockoff", w.size)


def seqstep_plus(pvals: PValueVector, alpha: float, gamma: float = 0.5, offset: float = 0.0) -> SelectionResult:
    """SeqStep+ over features ordered by increasing magnitude ``M_j``."""
    _check_alpha(alpha)
    lo = alpha / (alpha + 1)
    if not (lo - 1e-12 <= gamma <= 0.5 + 1e-12):
        raise GammaOutOfRange(f"gamma={gamma} outside [{lo:.4g}, 0.5]")
    p = np.asarray(pvals.p_vals, dtype=float)
    order = np.argsort(np.asarray(pvals.magnitudes, dtype=float), kind="stable")
    small = p[order] <= gamma
    # suffix counts over positions k..p-1
    n_small = np.cumsum(small[::-1])[::-1]
    n_large = np.cumsum(~small[::-1])[::-1]
    ok = (offset + n_large) / np.maximum(1, n_small) <= (1 - gamma) / gamma * alpha
    if not ok.any():
        return SelectionResult(np.array([], dtype=int), 0.0, alpha, "seqstep+", p.size)
    k = int(np.argmax(ok))
    chosen = order[k:][small[k:]]
    return SelectionResult(np.sort(chosen), float(k + 1), alpha, "seqstep+", p.size)


def ebh(e, alpha: float) -> SelectionResult:
    """eBH: reject the ``k_hat`` largest e-values, ``k_hat = max{k: k e_(k) / p >= 1/alpha}``."""
    _check_alpha(alpha)
    e = np.asarray(e, dtype=float)
    if np.any(e < 0):
        raise ValueError("e-values must be non-negative")
    p = e.size
    order = np.argsort(-e, kind="stable")
    k = np.arange(1, p + 1)
    ok = k * e[order] / p >= 1.0 / alpha
    if not ok.any():
        return SelectionResult(np.array([], dtype=int), 0.0, alpha, "ebh", p)
    k_hat = int(np.flatnonzero(ok).max()) + 1
    return SelectionResult(np.sort(order[:k_hat]), float(k_hat), alpha, "ebh", p)


def bh(pvalues, alpha: float) -> SelectionResult:
    """Benjamini-Hochberg step-up on a vector of p-values."""
    _check_alpha(alpha)
    pv = np.asarray(pvalues, dtype=float)
    m = pv.size
    order = np.argsort(pv, kind="stable")
    ok = pv[order] <= alpha * np.arange(1, m + 1) / m
    if not ok.any():
        return SelectionResult(np.array([], dtype=int), 0.0, alpha, "bh", m)
    k_hat = int(np.flatnonzero(ok).max()) + 1
    return SelectionResult(np.sort(order[:k_hat]), float(pv[order][k_hat - 1]), alpha, "bh", m)


def ols_t_pvalues(X: DesignMatrix, y) -> np.ndarray:
    """Two-sided OLS t-test p-values with ``n - p`` degrees of freedom."""
    X = as_design(X)
    y = np.asarray(y, dtype=float)
    df = X.n - X.p
    if df < 1:
        raise DimensionError(f"need n > p for t-statistics, got n={X.n}, p={X.p}")
    beta, resid = ols_fit(X, y)
    sigma2 = resid @ resid / df
    inv_diag = (X.svd.V**2) @ (1.0 / X.svd.d**2)
    se = np.sqrt(sigma2 * inv_diag)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(se > 0, beta / se, np.where(beta == 0, 0.0, np.inf))
    return 2.0 * stats.t.sf(np.abs(t), df)


def bh_baseline(X: DesignMatrix, y, alpha: float) -> SelectionResult:
    res = bh(ols_t_pvalues(X, y), alpha)
    return SelectionResult(res.rejected, res.threshold, alpha, "bh", res.n_features)


@dataclass(frozen=True)
class DerandomizedResult:
    frequencies: np.ndarray
    eta: float
    M: int
    rejected: np.ndarray

    def as_set(self) -> set[int]:
        return {int(j) for j in self.rejected}


def aggregate_frequencies(results: list[SelectionResult], eta: float) -> DerandomizedResult:
    """Rejection frequencies ``Pi_j`` across runs and the set ``{Pi_j >= eta}``."""
    if not results:
        raise ValueError("need at least one run")
    p = results[0].n_features
    counts = np.zeros(p, dtype=int)
    for res in results:
        if res.n_features != p:
            raise DimensionError("runs disagree on the number of features")
        counts[res.rejected] += 1
    M = len(results)
    freq = counts / M
    # compare on integer counts to avoid rounding in counts / M
    rejected = np.flatnonzero(counts >= eta * M - 1e-9)
    return DerandomizedResult(freq, eta, M, rejected)


def derandomize(run: Callable[[int], SelectionResult], M: int, eta: float = 0.5) -> DerandomizedResult:
    """Call ``run(replicate)`` for ``replicate = 0..M-1`` and keep features rejected often enough.

    ``run`` owns its randomness; it should derive it from the replicate
    index so that the whole procedure is reproducible.
    """
    if M < 1:
        raise ValueError(f"M must be at least 1, got {M}")
    if not 0.0 < eta <= 1.0:
        raise ValueError(f"eta must lie in (0, 1], got {eta}")
    return aggregate_frequencies([run(m) for m in range(M)], eta)
