"""End-to-end OATK runs: basic, multi-copy and derandomized."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import _rng
from .knockoffs import draw_unit_residuals, generate_multi_knockoffs, make_plan, residual_norm
from .linalg import (
    ColumnGeometry,
    DesignMatrix,
    LeverageOneWarning,
    RidgeFit,
    as_design,
    column_geometry,
    ridge_fit,
    ridge_path,
    select_lambda_loocv,
)
from .selection import DerandomizedResult, SelectionResult, aggregate_frequencies, knockoff_threshold, seqstep_plus
from .statistics import CoefficientPair, PValueVector, multi_knockoff_pvalues, w_statistics


@dataclass(frozen=True)
class OATKContext:
    """Everything about one ``(X, y)`` that does not depend on the random ``r_j``.

    ``beta_tilde = shift + scale * (R^T y)`` for unit residual columns ``R``.
    """

    design: DesignMatrix
    y: np.ndarray
    fit: RidgeFit
    geometry: ColumnGeometry
    s: np.ndarray
    shift: np.ndarray
    scale: np.ndarray

    @property
    def lam(self) -> float:
        return self.fit.lam


def prepare(X, y, lam: float | None = None, lambdas=None, s=None) -> OATKContext:
    """Fit ridge (LOOCV-selected unless ``lam`` is given) and precompute the knockoff shift.

    ``s`` defaults to ``sigma_j^2``.
    """
    X = as_design(X)
    y = np.asarray(y, dtype=float)
    if lam is None:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", LeverageOneWarning)
            fit = select_lambda_loocv(ridge_path(X, y, lambdas))
    else:
        fit = ridge_fit(X, y, float(lam))
    geometry = column_geometry(X, fit.lam)
    s = make_plan(X, s=s, seed=0, copies=1).s
    inv_diag = geometry.sigma_lambda_inv_diag
    shift = fit.beta_ridge - inv_diag * s * fit.beta_ols
    scale = inv_diag * residual_norm(s, geometry.sigma_sq)
    return OATKContext(X, y, fit, geometry, s, shift, scale)


@dataclass(frozen=True)
class OATKResult:
    selection: SelectionResult
    w: np.ndarray
    pair: CoefficientPair
    context: OATKContext
    seed: int
    replicate: int = 0


def _knockoff_run(ctx: OATKContext, alpha: float, offset: float, seed: int, replicate: int) -> OATKResult:
    R = draw_unit_residuals(ctx.design, seed, replicate)
    beta_tilde = ctx.shift + ctx.scale * (R.T @ ctx.y)
    pair = CoefficientPair(ctx.fit.beta_ridge.copy(), beta_tilde, ctx.lam)
    w = w_statistics(pair)
    sel = knockoff_threshold(w, alpha, offset)
    sel = SelectionResult(sel.rejected, sel.threshold, alpha, "oatk", sel.n_features)
    return OATKResult(sel, w, pair, ctx, seed, replicate)


def oatk_select(
    X,
    y,
    alpha: float = 0.1,
    offset: float = 0.0,
    lam: float | None = None,
    lambdas=None,
    s=None,
    seed=None,
    replicate: int = 0,
    context: OATKContext | None = None,
) -> OATKResult:
    """Basic one-at-a-time knockoff selection.

    Parameters
    ----------
    X : array-like or DesignMatrix
        Raw arrays are column-normalized first.
    y : array-like, shape (n,)
    alpha : float
        Target FDR.
    offset : float
        ``c`` in the threshold rule; 0 is the default used for simulations,
        1 gives the conservative variant.
    lam : float, optional
        Fixed ridge penalty. Selected by LOOCV over ``lambdas`` when omitted.
    s : array-like, optional
        Per-column decorrelation; defaults to ``sigma_j^2``.
    seed : int, optional
        Seed for the residual directions ``r_j``.
    replicate : int
        Residual draw index; derandomization uses ``0..M-1``.
    context : OATKContext, optional
        Reuse a previously prepared fit.
    """
    ctx = context if context is not None else prepare(X, y, lam=lam, lambdas=lambdas, s=s)
    return _knockoff_run(ctx, alpha, offset, _rng.resolve_seed(seed), replicate)


@dataclass(frozen=True)
class MultiOATKResult:
    selection: SelectionResult
    pvalues: PValueVector
    context: OATKContext
    seed: int


def oatk_multi(
    X,
    y,
    alpha: float = 0.1,
    M: int = 10,
    gamma: float = 0.5,
    offset: float = 0.0,
    lam: float | None = None,
    lambdas=None,
    s=None,
    seed=None,
    context: OATKContext | None = None,
) -> MultiOATKResult:
    """Multi-copy OATK: per-feature p-values from ``M`` knockoffs, filtered by SeqStep+.

    ``s`` defaults to ``sigma_j^2``, which is admissible for every ``M``.
    """
    ctx = context if context is not None else prepare(X, y, lam=lam, lambdas=lambdas, s=s)
    seed = _rng.resolve_seed(seed)
    plan = make_plan(ctx.design, s=ctx.s, seed=seed, copies=M)
    sets = [generate_multi_knockoffs(ctx.design, plan, j, M) for j in range(ctx.design.p)]
    pv = multi_knockoff_pvalues(ctx.design, ctx.y, ctx.fit, ctx.geometry, sets)
    sel = seqstep_plus(pv, alpha, gamma, offset)
    return MultiOATKResult(SelectionResult(sel.rejected, sel.threshold, alpha, "oatk_multi", sel.n_features), pv, ctx, seed)


@dataclass(frozen=True)
class DerandomizedOATKResult:
    derandomized: DerandomizedResult
    runs: list[OATKResult]
    context: OATKContext
    seed: int

    @property
    def rejected(self) -> np.ndarray:
        return self.derandomized.rejected


def oatk_derandomized(
    X,
    y,
    alpha: float = 0.1,
    M: int = 30,
    eta: float = 0.5,
    offset: float = 0.0,
    lam: float | None = None,
    lambdas=None,
    s=None,
    seed=None,
    context: OATKContext | None = None,
) -> DerandomizedOATKResult:
    """Repeat OATK with ``M`` independent residual draws and keep features with ``Pi_j >= eta``.

    The ridge/OLS fit and the deterministic part of every knockoff
    coefficient are computed once; each replicate only redraws ``r_j``.
    Replicate 0 is exactly :func:`oatk_select` with the same seed.
    """
    if M < 1:
        raise ValueError(f"M must be at least 1, got {M}")
    if not 0.0 < eta <= 1.0:
        raise ValueError(f"eta must lie in (0, 1], got {eta}")
    ctx = context if context is not None else prepare(X, y, lam=lam, lambdas=lambdas, s=s)
    seed = _rng.resolve_seed(seed)
    runs = [_knockoff_run(ctx, alpha, offset, seed, m) for m in range(M)]
    agg = aggregate_frequencies([r.selection for r in runs], eta)
    return DerandomizedOATKResult(agg, runs, ctx, seed)
