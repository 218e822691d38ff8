"""SVD-backed ridge regression and the per-column quantities built on it.

Everything downstream works from one thin SVD ``X = U diag(d) V^T`` of the
unit-norm design.  Given that factorization, a whole grid of ridge fits,
their closed-form leave-one-out errors, the diagonal of
``(X^T X + lambda I)^{-1}`` and the partial-regression SSEs ``sigma_j^2`` all
cost O(np) or less per lambda.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .exceptions import (
    AllSkipped,
    DimensionError,
    NonFinite,
    RankDeficient,
)

RANK_TOL = 1e-10
LEVERAGE_TOL = 1e-12


def default_lambda_grid(num: int = 50, low: float = 1e-4, high: float = 1e4) -> np.ndarray:
    """Log-spaced ridge penalties spanning near-OLS to near-null fits."""
    return np.logspace(np.log10(low), np.log10(high), num)


@dataclass(frozen=True)
class SvdFactors:
    """Thin SVD ``X = U @ diag(d) @ V.T`` with ``d`` in descending order."""

    U: np.ndarray
    d: np.ndarray
    V: np.ndarray


@dataclass(frozen=True)
class DesignMatrix:
    """A full-rank ``n x p`` design with unit-norm columns and cached SVD.

    Build instances with :func:`ingest_design`; the constructor does not
    validate anything.
    """

    values: np.ndarray
    svd: SvdFactors
    column_names: tuple[str, ...] | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]

    @property
    def partial_residuals(self) -> np.ndarray:
        """Columns ``x_j - P_{-j} x_j``: the part of each column not explained by the others.

        Uses ``X Sigma^{-1} e_j = (x_j - P_{-j} x_j) / sigma_j^2`` so no
        leave-one-column-out factorization is needed.
        """
        if "partial_residuals" not in self._cache:
            U, d, V = self.svd.U, self.svd.d, self.svd.V
            x_sigma_inv = U @ (V.T / d[:, None])
            sigma_sq = 1.0 / ((V**2) @ (1.0 / d**2))
            self._cache["partial_residuals"] = x_sigma_inv * sigma_sq
        return self._cache["partial_residuals"]


def _check_finite(a: np.ndarray, what: str) -> None:
    bad = ~np.isfinite(a)
    if bad.any():
        idx = [int(i) for i in np.argwhere(bad)[0]]
        where = f"row {idx[0]}, column {idx[1]}" if len(idx) == 2 else f"entry {idx[0]}"
        raise NonFinite(f"{what} has a non-finite value at {where} (0-based)")


def ingest_design(
    raw,
    normalize: bool = True,
    center: bool = False,
    column_names=None,
    rank_tol: float = RANK_TOL,
) -> DesignMatrix:
    """Validate a raw design, optionally center and scale it, and cache its SVD.

    Parameters
    ----------
    raw : array-like, shape (n, p)
        Raw design matrix.
    normalize : bool
        Rescale each column to unit Euclidean norm.
    center : bool
        Subtract column means first. Off by default because the model has
        no intercept.
    column_names : sequence of str, optional
        Carried through to reports.
    rank_tol : float
        Smallest singular value allowed, relative to the largest.

    Raises
    ------
    NonFinite, DimensionError, RankDeficient
    """
    X = np.array(raw, dtype=float, copy=True)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise DimensionError(f"design must be 2-D, got shape {X.shape}")
    _check_finite(X, "design")
    n, p = X.shape
    if p == 0:
        raise DimensionError("design has no columns")
    if n < p:
        raise DimensionError(f"need n >= p, got n={n}, p={p}")
    if column_names is not None and len(column_names) != p:
        raise DimensionError(f"{len(column_names)} column names for {p} columns")
    if center:
        X -= X.mean(axis=0)
    if normalize:
        norms = np.linalg.norm(X, axis=0)
        zero = np.flatnonzero(norms == 0)
        if zero.size:
            raise RankDeficient(f"column {int(zero[0])} is identically zero")
        X /= norms
    U, d, Vt = np.linalg.svd(X, full_matrices=False)
    if d[-1] <= rank_tol * d[0]:
        raise RankDeficient(
            f"smallest singular value {d[-1]:.3e} is below {rank_tol:g} x largest ({d[0]:.3e})"
        )
    names = tuple(str(c) for c in column_names) if column_names is not None else None
    return DesignMatrix(values=X, svd=SvdFactors(U=U, d=d, V=Vt.T), column_names=names)


def as_design(X) -> DesignMatrix:
    """Return ``X`` unchanged if already ingested, else ingest it with defaults."""
    if isinstance(X, DesignMatrix):
        return X
    return ingest_design(X)


class LeverageOneWarning(UserWarning):
    """A lambda was skipped because LOOCV is undefined there."""


@dataclass(frozen=True)
class RidgeFit:
    """One ridge fit on the SVD path.

    ``loocv_sse`` is NaN when some row has leverage one at this lambda.
    """

    lam: float
    beta_ridge: np.ndarray
    beta_ols: np.ndarray
    fitted: np.ndarray
    loocv_sse: float


def _shrinkage(d: np.ndarray, lambdas: np.ndarray) -> np.ndarray:
    """``d_j^2 / (d_j^2 + lambda)`` as an array of shape (len(lambdas), p)."""
    d2 = d**2
    return d2[None, :] / (d2[None, :] + lambdas[:, None])


def loocv_sse_batch(svd: SvdFactors, Y: np.ndarray, lambdas: np.ndarray) -> np.ndarray:
    """Closed-form LOOCV SSE for each lambda and each response column.

    Parameters
    ----------
    svd : SvdFactors
    Y : ndarray, shape (n,) or (n, B)
    lambdas : ndarray, shape (L,)

    Returns
    -------
    ndarray, shape (L,) or (L, B)
        NaN where some leverage equals one within ``LEVERAGE_TOL``.
    """
    U, d = svd.U, svd.d
    lambdas = np.asarray(lambdas, dtype=float)
    squeeze = Y.ndim == 1
    Y2 = Y[:, None] if squeeze else Y
    shrink = _shrinkage(d, lambdas)  # (L, p)
    # 1 - leverage_i(lambda) = 1 - sum_k U_ik^2 shrink_k
    denom = 1.0 - (U**2) @ shrink.T  # (n, L)
    C = U.T @ Y2  # (p, B)
    Y_perp = Y2 - U @ C
    out = np.empty((lambdas.size, Y2.shape[1]))
    for k in range(lambdas.size):
        resid = Y_perp + U @ ((1.0 - shrink[k])[:, None] * C)
        dk = denom[:, k]
        if np.any(np.abs(dk) < LEVERAGE_TOL):
            out[k] = np.nan
            continue
        out[k] = np.sum((resid / dk[:, None]) ** 2, axis=0)
    return out[:, 0] if squeeze else out


def ridge_path(X: DesignMatrix, y, lambdas=None) -> list[RidgeFit]:
    """Fit ridge regression for every lambda on the grid using one SVD.

    Lambdas at which LOOCV is undefined (a leverage of one) are kept with
    ``loocv_sse = nan`` and reported through a :class:`LeverageOneWarning`.
    """
    X = as_design(X)
    y = np.asarray(y, dtype=float)
    if y.shape != (X.n,):
        raise DimensionError(f"response has shape {y.shape}, expected ({X.n},)")
    _check_finite(y, "response")
    lambdas = default_lambda_grid() if lambdas is None else np.atleast_1d(np.asarray(lambdas, float))
    if lambdas.size == 0:
        raise ValueError("lambda grid is empty")
    if np.any(lambdas < 0):
        raise ValueError("lambda grid must be non-negative")

    U, d, V = X.svd.U, X.svd.d, X.svd.V
    c = U.T @ y
    beta_ols = V @ (c / d)
    sse = loocv_sse_batch(X.svd, y, lambdas)
    fits = []
    for lam, err in zip(lambdas, sse):
        beta = V @ (d / (d**2 + lam) * c)
        fitted = U @ (d**2 / (d**2 + lam) * c)
        if np.isnan(err):
            warnings.warn(
                f"leverage equals one at lambda={lam:g}; LOOCV skipped", LeverageOneWarning, stacklevel=2
            )
        fits.append(RidgeFit(float(lam), beta, beta_ols, fitted, float(err)))
    return fits


def select_lambda_loocv(fits: list[RidgeFit]) -> RidgeFit:
    """Return the fit minimizing LOOCV SSE; ties go to the smaller lambda."""
    usable = [f for f in fits if not np.isnan(f.loocv_sse)]
    if not usable:
        raise AllSkipped("no lambda produced a defined LOOCV error")
    return min(usable, key=lambda f: (f.loocv_sse, f.lam))


def ridge_fit(X: DesignMatrix, y, lam: float) -> RidgeFit:
    """Single ridge fit at a fixed penalty (LOOCV still reported)."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", LeverageOneWarning)
        return ridge_path(X, y, [lam])[0]


@dataclass(frozen=True)
class ColumnGeometry:
    """Per-column ``[Sigma_lambda^{-1}]_jj`` and ``sigma_j^2 = 1 / [Sigma^{-1}]_jj``."""

    lam: float
    sigma_lambda_inv_diag: np.ndarray
    sigma_sq: np.ndarray


def column_geometry(X: DesignMatrix, lam: float) -> ColumnGeometry:
    """Diagonal quantities of the ridge and OLS inverse Gram matrices."""
    X = as_design(X)
    d, V = X.svd.d, X.svd.V
    V2 = V**2
    inv_diag = V2 @ (1.0 / (d**2 + lam))
    sigma_sq = 1.0 / (V2 @ (1.0 / d**2))
    return ColumnGeometry(float(lam), inv_diag, sigma_sq)


def ols_fit(X: DesignMatrix, y) -> tuple[np.ndarray, np.ndarray]:
    """OLS coefficients and residuals."""
    X = as_design(X)
    c = X.svd.U.T @ y
    beta = X.svd.V @ (c / X.svd.d)
    return beta, y - X.svd.U @ c
