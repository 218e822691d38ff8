"""Original/knockoff coefficient pairs, W statistics and multi-copy p-values.

None of these functions runs a knockoff regression.  Replacing ``x_j`` by
its knockoff changes only ``x_j^T y`` in the normal equations, so

    beta_tilde_j = beta_ridge_j - [Sigma_lam^{-1}]_jj s_j beta_ols_j
                   + [Sigma_lam^{-1}]_jj ||r_j|| (r_j / ||r_j||)^T y

needs one ridge fit, one OLS fit and an inner product per column.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import DimensionError, LambdaMismatch
from .knockoffs import MultiKnockoffSet, residual_norm
from .linalg import ColumnGeometry, DesignMatrix, RidgeFit, as_design


@dataclass(frozen=True)
class CoefficientPair:
    beta_hat: np.ndarray
    beta_tilde: np.ndarray
    lam: float


def _check_lambda(fit: RidgeFit, geometry: ColumnGeometry) -> None:
    if not np.isclose(fit.lam, geometry.lam, rtol=1e-12, atol=0.0):
        raise LambdaMismatch(f"fit at lambda={fit.lam:g} but geometry at lambda={geometry.lam:g}")


def knockoff_coefficients(
    X: DesignMatrix,
    y,
    fit: RidgeFit,
    geometry: ColumnGeometry,
    residuals,
    s,
) -> CoefficientPair:
    """Knockoff ridge coefficients via the closed-form update.

    Parameters
    ----------
    X : DesignMatrix
    y : ndarray, shape (n,)
    fit : RidgeFit
        Ridge fit of ``y`` on ``X``; supplies ``beta_ridge`` and ``beta_ols``.
    geometry : ColumnGeometry
        Must be computed at ``fit.lam``.
    residuals : ndarray, shape (n, p)
        Unit-norm ``r_j`` orthogonal to ``col(X)``, one column per feature.
    s : ndarray, shape (p,)

    Returns
    -------
    CoefficientPair
    """
    X = as_design(X)
    y = np.asarray(y, dtype=float)
    residuals = np.asarray(residuals, dtype=float)
    if y.shape != (X.n,):
        raise DimensionError(f"response has shape {y.shape}, expected ({X.n},)")
    if residuals.shape != (X.n, X.p):
        raise DimensionError(f"residuals have shape {residuals.shape}, expected {(X.n, X.p)}")
    _check_lambda(fit, geometry)
    s = np.broadcast_to(np.asarray(s, dtype=float), (X.p,))
    inv_diag = geometry.sigma_lambda_inv_diag
    scale = inv_diag * residual_norm(s, geometry.sigma_sq)
    beta_tilde = fit.beta_ridge - inv_diag * s * fit.beta_ols + scale * (residuals.T @ y)
    return CoefficientPair(fit.beta_ridge.copy(), beta_tilde, fit.lam)


def w_statistics(pair: CoefficientPair) -> np.ndarray:
    """``|b_j|`` if ``|b_j| >= |bk_j|`` else ``-|bk_j|``; ties go positive."""
    a = np.abs(pair.beta_hat)
    b = np.abs(pair.beta_tilde)
    return np.where(a >= b, a, -b)


@dataclass(frozen=True)
class PValueVector:
    """Multi-copy p-values on ``{1/(M+1), ..., 1}`` and the ordering magnitudes."""

    p_vals: np.ndarray
    magnitudes: np.ndarray
    M: int
    coefficients: np.ndarray | None = None  # (p, M+1); column 0 is the original


def pvalues_from_coefficients(coefs: np.ndarray) -> PValueVector:
    """p-values from a ``(p, M+1)`` array whose first column is the original coefficient."""
    coefs = np.asarray(coefs, dtype=float)
    mags = np.abs(coefs)
    M = coefs.shape[1] - 1
    count = np.sum(mags[:, 1:] >= mags[:, :1], axis=1)
    return PValueVector((1.0 + count) / (M + 1), mags.max(axis=1), M, coefs)


def multi_knockoff_pvalues(
    X: DesignMatrix,
    y,
    fit: RidgeFit,
    geometry: ColumnGeometry,
    multi: list[MultiKnockoffSet],
) -> PValueVector:
    """p-values comparing each original coefficient against its ``M`` knockoff copies.

    Copy ``m`` of column ``j`` has random part equal to column ``m`` of
    ``R C``, so its coefficient is the single-knockoff update with that
    column in place of ``||r_j|| r_j``.
    """
    X = as_design(X)
    y = np.asarray(y, dtype=float)
    if len(multi) != X.p:
        raise DimensionError(f"need one knockoff set per column, got {len(multi)} for p={X.p}")
    Ms = {ks.M for ks in multi}
    if len(Ms) != 1:
        raise DimensionError(f"knockoff sets disagree on M: {sorted(Ms)}")
    _check_lambda(fit, geometry)
    M = Ms.pop()
    inv_diag = geometry.sigma_lambda_inv_diag
    coefs = np.empty((X.p, M + 1))
    coefs[:, 0] = fit.beta_ridge
    for ks in sorted(multi, key=lambda k: k.j):
        j = ks.j
        if ks.columns.shape != (X.n, M):
            raise DimensionError(f"knockoff set {j} has shape {ks.columns.shape}")
        shift = fit.beta_ridge[j] - inv_diag[j] * ks.s * fit.beta_ols[j]
        coefs[j, 1:] = shift + inv_diag[j] * (ks.random_part.T @ y)
    return pvalues_from_coefficients(coefs)
