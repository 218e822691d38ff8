"""One-at-a-time knockoff columns and their multi-copy generalization.

A knockoff for column ``j`` keeps every inner product with the other
columns, has unit norm, and has ``x_j^T xk_j = 1 - s_j``.  Any such column
has the form

    xk_j = (s_j / sigma_j^2) P_{-j} x_j + (1 - s_j / sigma_j^2) x_j + r_j

with ``r_j`` orthogonal to the column space of ``X`` and
``||r_j||^2 = 2 s_j - s_j^2 / sigma_j^2``.  Only ``r_j`` is random.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _rng
from .exceptions import DegenerateDraw, DimensionError, FactorizationFailure, SOutOfRange
from .linalg import ColumnGeometry, DesignMatrix, as_design, column_geometry

MAX_REDRAWS = 100
_DEGENERATE_NORM = 1e-12
_S_TOL = 1e-12


@dataclass(frozen=True)
class KnockoffPlan:
    """Decorrelation parameters ``s`` plus the geometry they were chosen against."""

    s: np.ndarray
    geometry: ColumnGeometry
    seed: int
    copies: int = 1

    @property
    def s_max(self) -> np.ndarray:
        return (self.copies + 1) / self.copies * self.geometry.sigma_sq


def make_plan(X: DesignMatrix, s=None, seed=None, copies: int = 1) -> KnockoffPlan:
    """Build a plan; ``s`` defaults to ``sigma_j^2`` for every column.

    ``s`` may be a scalar or a per-column array.  It is validated against
    ``[0, (copies+1)/copies * sigma_j^2]``.
    """
    X = as_design(X)
    geometry = column_geometry(X, 0.0)
    if s is None:
        s = geometry.sigma_sq.copy()
    s = np.broadcast_to(np.asarray(s, dtype=float), (X.p,)).copy()
    plan = KnockoffPlan(s=s, geometry=geometry, seed=_rng.resolve_seed(seed), copies=int(copies))
    _check_s(plan.s, plan.s_max)
    return plan


def _check_s(s: np.ndarray, s_max: np.ndarray, cols=None) -> None:
    cols = range(s.size) if cols is None else cols
    for j in cols:
        if s[j] < -_S_TOL or s[j] > s_max[j] * (1 + _S_TOL) + _S_TOL:
            raise SOutOfRange(f"s[{j}] = {s[j]:.6g} outside [0, {s_max[j]:.6g}]")


def residual_norm(s, sigma_sq):
    """``(2 s - s^2 / sigma^2)^{1/2}``, clipped at zero for boundary rounding."""
    return np.sqrt(np.maximum(2.0 * s - s**2 / sigma_sq, 0.0))


def _project_out(U: np.ndarray, G: np.ndarray) -> np.ndarray:
    # two passes: the second removes what rounding left behind
    G = G - U @ (U.T @ G)
    return G - U @ (U.T @ G)


def _unit_column(U: np.ndarray, rng: np.random.Generator, n: int) -> np.ndarray:
    for _ in range(MAX_REDRAWS):
        r = _project_out(U, rng.standard_normal(n))
        norm = np.linalg.norm(r)
        if norm >= _DEGENERATE_NORM:
            return r / norm
    raise DegenerateDraw(f"residual draw collapsed {MAX_REDRAWS} times")


def draw_unit_residuals(X: DesignMatrix, seed: int, replicate: int = 0, columns=None) -> np.ndarray:
    """Independent unit vectors orthogonal to ``col(X)``, one per requested column.

    Column ``j`` is drawn from its own stream keyed by ``(seed, replicate, j)``,
    so (up to rounding in the batched projection) it does not depend on which
    other columns are requested.

    Returns
    -------
    ndarray, shape (n, len(columns))
    """
    X = as_design(X)
    if X.n <= X.p:
        raise DimensionError(f"no orthogonal complement: n={X.n}, p={X.p}")
    columns = list(range(X.p) if columns is None else columns)
    U = X.svd.U
    rngs = [_rng.stream(seed, _rng.SINGLE, replicate, j) for j in columns]
    G = np.empty((X.n, len(columns)))
    for k, rng in enumerate(rngs):
        G[:, k] = rng.standard_normal(X.n)
    G = _project_out(U, G)
    norms = np.linalg.norm(G, axis=0)
    for k in np.flatnonzero(norms < _DEGENERATE_NORM):
        G[:, k] = _unit_column(U, rngs[k], X.n)
        norms[k] = 1.0
    return G / norms


@dataclass(frozen=True)
class ResidualBasis:
    """``n x M`` orthonormal columns spanning a subspace orthogonal to ``col(X)``."""

    R: np.ndarray


def generate_residual(X: DesignMatrix, count: int, seed) -> ResidualBasis:
    """Draw ``count`` orthonormal vectors in the orthogonal complement of ``col(X)``.

    Gaussian draws are projected off ``col(X)`` and orthonormalized by QR
    with a sign fix, which gives a uniformly distributed frame.
    """
    X = as_design(X)
    if X.n < X.p + count:
        raise DimensionError(f"need n >= p + M, got n={X.n}, p={X.p}, M={count}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    U = X.svd.U
    for _ in range(MAX_REDRAWS):
        G = _project_out(U, rng.standard_normal((X.n, count)))
        Q, Rf = np.linalg.qr(G)
        diag = np.diag(Rf)
        if np.all(np.abs(diag) >= _DEGENERATE_NORM):
            Q = Q * np.sign(diag)
            return ResidualBasis(_project_out(U, Q))
    raise DegenerateDraw(f"residual basis collapsed {MAX_REDRAWS} times")


@dataclass(frozen=True)
class KnockoffColumn:
    j: int
    x_tilde: np.ndarray
    r: np.ndarray


def deterministic_part(X: DesignMatrix, s_j: float, sigma_sq_j: float, j: int) -> np.ndarray:
    """``(s/sigma^2) P_{-j} x_j + (1 - s/sigma^2) x_j = x_j - (s/sigma^2)(x_j - P_{-j} x_j)``."""
    return X.values[:, j] - (s_j / sigma_sq_j) * X.partial_residuals[:, j]


def generate_knockoff_column(
    X: DesignMatrix, plan: KnockoffPlan, j: int, unit_r=None, replicate: int = 0
) -> KnockoffColumn:
    """Materialize the knockoff for column ``j``.

    If ``unit_r`` is omitted it is drawn from the same stream
    :func:`draw_unit_residuals` uses, so materialized knockoffs agree with
    the shortcut coefficients for the same seed and replicate.
    """
    X = as_design(X)
    s_j = float(plan.s[j])
    sigma_sq_j = float(plan.geometry.sigma_sq[j])
    if s_j < -_S_TOL or s_j > 2 * sigma_sq_j * (1 + _S_TOL) + _S_TOL:
        raise SOutOfRange(f"s[{j}] = {s_j:.6g} outside [0, {2 * sigma_sq_j:.6g}]")
    if unit_r is None:
        unit_r = draw_unit_residuals(X, plan.seed, replicate, [j])[:, 0]
    r = residual_norm(s_j, sigma_sq_j) * np.asarray(unit_r, dtype=float)
    return KnockoffColumn(j, deterministic_part(X, s_j, sigma_sq_j, j) + r, r)


@dataclass(frozen=True)
class ConditionResiduals:
    """Violations of the three knockoff conditions for one column."""

    cross_others: float
    cross_self: float
    norm: float

    def max(self) -> float:
        return max(self.cross_others, self.cross_self, self.norm)


def verify_conditions(X: DesignMatrix, kc: KnockoffColumn, s_j: float) -> ConditionResiduals:
    X = as_design(X)
    x = X.values[:, kc.j]
    xk = kc.x_tilde
    if xk.shape != x.shape:
        raise DimensionError(f"knockoff has shape {xk.shape}, expected {x.shape}")
    others = np.delete(X.values, kc.j, axis=1)
    cross = float(np.max(np.abs(others.T @ (x - xk)))) if others.shape[1] else 0.0
    return ConditionResiduals(
        cross_others=cross,
        cross_self=float(abs(x @ xk - (1.0 - s_j))),
        norm=float(abs(xk @ xk - 1.0)),
    )


@dataclass(frozen=True)
class MultiKnockoffSet:
    """``M`` exchangeable knockoff copies of column ``j``.

    ``columns = base e^T + R C`` with ``C^T C = s I + s (1 - s/sigma^2) e e^T``.
    """

    j: int
    M: int
    s: float
    columns: np.ndarray
    C: np.ndarray
    R: np.ndarray

    @property
    def random_part(self) -> np.ndarray:
        return self.R @ self.C


def gram_target(s_j: float, sigma_sq_j: float, M: int) -> np.ndarray:
    return s_j * np.eye(M) + s_j * (1.0 - s_j / sigma_sq_j) * np.ones((M, M))


def factor_gram_target(target: np.ndarray, clamp: float = 1e-10) -> np.ndarray:
    """Upper-triangular ``C`` with ``C^T C = target`` for PSD ``target``.

    Eigenvalues in ``[-clamp, 0)`` are treated as zero, which is what the
    boundary ``s = (M+1)/M sigma^2`` produces; anything more negative is an
    error.  The symmetric square root is reduced to triangular form by QR.
    """
    vals, vecs = np.linalg.eigh(target)
    scale = max(1.0, float(np.max(np.abs(vals))))
    if vals.min() < -clamp * scale:
        raise FactorizationFailure(f"Gram target has eigenvalue {vals.min():.3e}")
    root = (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ vecs.T
    _, C = np.linalg.qr(root)
    return C


def generate_multi_knockoffs(X: DesignMatrix, plan: KnockoffPlan, j: int, M: int, seed=None, replicate: int = 0):
    """``M`` knockoff copies of column ``j`` satisfying the pairwise Gram conditions.

    ``seed`` defaults to the plan's seed; the residual basis for column ``j``
    is drawn from a stream keyed by ``(seed, replicate, j)``.
    """
    X = as_design(X)
    if X.n < X.p + M:
        raise DimensionError(f"need n >= p + M, got n={X.n}, p={X.p}, M={M}")
    s_j = float(plan.s[j])
    sigma_sq_j = float(plan.geometry.sigma_sq[j])
    s_max = (M + 1) / M * sigma_sq_j
    if s_j < -_S_TOL or s_j > s_max * (1 + _S_TOL) + _S_TOL:
        raise SOutOfRange(f"s[{j}] = {s_j:.6g} outside [0, {s_max:.6g}] for M={M}")
    seed = plan.seed if seed is None else _rng.resolve_seed(seed)
    basis = generate_residual(X, M, _rng.stream(seed, _rng.MULTI, replicate, j))
    C = factor_gram_target(gram_target(s_j, sigma_sq_j, M))
    base = deterministic_part(X, s_j, sigma_sq_j, j)
    cols = base[:, None] + basis.R @ C
    return MultiKnockoffSet(j=j, M=M, s=s_j, columns=cols, C=C, R=basis.R)
