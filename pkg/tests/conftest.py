"""Shared fixtures and brute-force oracles.

The oracles below deliberately avoid the package's SVD shortcuts: they
solve normal equations, refit models and build projectors explicitly.
"""

import numpy as np
import pytest

from oatk.linalg import ingest_design


def random_design(rng, n, p, rho=0.0):
    """Unit-norm design with optional equicorrelation between columns."""
    Z = rng.standard_normal((n, p))
    if rho:
        Z = np.sqrt(1 - rho) * Z + np.sqrt(rho) * rng.standard_normal((n, 1))
    return ingest_design(Z)


def ridge_oracle(X, y, lam):
    p = X.shape[1]
    return np.linalg.solve(X.T @ X + lam * np.eye(p), X.T @ y)


def loocv_oracle(X, y, lam):
    """Sum of squared leave-one-out prediction errors by ``n`` refits."""
    sse = 0.0
    for i in range(X.shape[0]):
        keep = np.arange(X.shape[0]) != i
        b = ridge_oracle(X[keep], y[keep], lam)
        sse += (y[i] - X[i] @ b) ** 2
    return sse


def projector(A):
    """Orthogonal projector onto col(A); zero matrix when A has no columns."""
    if A.shape[1] == 0:
        return np.zeros((A.shape[0], A.shape[0]))
    Q, _ = np.linalg.qr(A)
    return Q @ Q.T


def partial_sse_oracle(X, j):
    """SSE of regressing column ``j`` on the other columns."""
    others = np.delete(X, j, axis=1)
    r = X[:, j] - projector(others) @ X[:, j]
    return float(r @ r)


def knockoff_ridge_oracle(X, y, x_tilde, j, lam):
    """``j``-th ridge coefficient after replacing column ``j`` by ``x_tilde``."""
    Xk = X.copy()
    Xk[:, j] = x_tilde
    return ridge_oracle(Xk, y, lam)[j]


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
