"""Synthetic designs, responses, the Gaussian-mirror baseline and the experiment loop."""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from typing import Callable

import numpy as np

from .calibration import CalibrationConfig, calibrated_oatk
from .exceptions import ConfigError, DimensionError, SingularCovariance
from .linalg import DesignMatrix, as_design, ingest_design, ols_fit
from .procedure import oatk_derandomized, oatk_multi, oatk_select
from .selection import SelectionResult, bh_baseline, knockoff_threshold

STRUCTURES = ("power_decay", "const_pos", "const_neg")
DESIGNS = ("gaussian", "markov", "external")


def _as_rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


# --------------------------------------------------------------------------
# designs
# --------------------------------------------------------------------------


def gaussian_covariance(structure: str, rho: float, p: int) -> np.ndarray:
    """Row covariance for the three Gaussian designs."""
    if structure not in STRUCTURES:
        raise ValueError(f"unknown structure {structure!r}; expected one of {STRUCTURES}")
    if not 0.0 <= rho < 1.0:
        raise ValueError(f"rho must lie in [0, 1), got {rho}")
    idx = np.arange(p)
    if structure == "power_decay":
        return rho ** np.abs(idx[:, None] - idx[None, :]).astype(float)
    Q = np.full((p, p), rho)
    np.fill_diagonal(Q, 1.0)
    if structure == "const_pos":
        return Q
    try:
        inv = np.linalg.inv(Q)
    except np.linalg.LinAlgError as exc:
        raise SingularCovariance(f"Q is singular for rho={rho}") from exc
    return 0.5 * (inv + inv.T)


def sample_gaussian_rows(structure: str, rho: float, n: int, p: int, seed=None) -> np.ndarray:
    """Raw ``n x p`` matrix with i.i.d. ``N(0, Sigma_x)`` rows (no normalization)."""
    cov = gaussian_covariance(structure, rho, p)
    try:
        L = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise SingularCovariance(f"{structure} covariance with rho={rho} is not positive definite") from exc
    return _as_rng(seed).standard_normal((n, p)) @ L.T


def gen_gaussian_design(structure: str, rho: float, n: int, p: int, seed=None) -> DesignMatrix:
    return ingest_design(sample_gaussian_rows(structure, rho, n, p, seed))


def markov_transition(gamma: float) -> np.ndarray:
    """3x3 transition matrix: stay with ``1/3 + 2 gamma / 3``, else move uniformly."""
    stay = 1.0 / 3.0 + 2.0 * gamma / 3.0
    move = (1.0 - gamma) / 3.0
    P = np.full((3, 3), move)
    np.fill_diagonal(P, stay)
    return P


def sample_markov_rows(n: int, p: int, seed=None, gammas=None) -> tuple[np.ndarray, np.ndarray]:
    """Raw Markov-chain design on states {0, 1, 2} and the per-step ``gamma``.

    Each row is an independent chain of length ``p`` sharing the
    ``p - 1`` transition parameters.
    """
    rng = _as_rng(seed)
    if gammas is None:
        gammas = rng.uniform(0.0, 0.5, size=max(p - 1, 0))
    gammas = np.asarray(gammas, dtype=float)
    if gammas.shape != (max(p - 1, 0),):
        raise DimensionError(f"need {p - 1} gammas, got {gammas.shape}")
    X = np.empty((n, p))
    X[:, 0] = rng.integers(0, 3, size=n)
    for j, g in enumerate(gammas):
        stay = rng.random(n) < 1.0 / 3.0 + 2.0 * g / 3.0
        jump = 1 + rng.integers(0, 2, size=n)
        X[:, j + 1] = np.where(stay, X[:, j], (X[:, j] + jump) % 3)
    return X, gammas


def gen_markov_design(n: int, p: int, seed=None) -> DesignMatrix:
    return ingest_design(sample_markov_rows(n, p, seed)[0])


def gen_response(X: DesignMatrix, p1: int, amplitude: float, seed=None):
    """``y = X beta + z`` with ``p1`` nonzero coefficients ``+-amplitude`` and unit noise.

    Returns
    -------
    y : ndarray, shape (n,)
    truth : ndarray
        Sorted indices of the nonzero coefficients.
    beta : ndarray, shape (p,)
    """
    X = as_design(X)
    if not 0 <= p1 <= X.p:
        raise ValueError(f"p1 must lie in [0, {X.p}], got {p1}")
    rng = _as_rng(seed)
    truth = np.sort(rng.choice(X.p, size=p1, replace=False))
    beta = np.zeros(X.p)
    beta[truth] = amplitude * rng.choice([-1.0, 1.0], size=p1)
    y = X.values @ beta + rng.standard_normal(X.n)
    return y, truth, beta


# --------------------------------------------------------------------------
# Gaussian mirror (OLS form)
# --------------------------------------------------------------------------


def gm_mirror_scale(X: DesignMatrix, j: int, z) -> float:
    """``sqrt(x_j^T A x_j / z^T A z)`` with ``A`` the annihilator of ``X_{-j}``.

    Scaling ``z`` by this value gives the mirror the same residual norm as
    ``x_j`` after removing the other columns.
    """
    X = as_design(X)
    z = np.asarray(z, dtype=float)
    res = X.partial_residuals[:, j]
    u = res / np.linalg.norm(res)
    Uz = X.svd.U.T @ z
    z_annih = z @ z - Uz @ Uz + (u @ z) ** 2
    return math.sqrt(float(res @ res) / z_annih)


def gm_statistics(X: DesignMatrix, y, seed=None) -> np.ndarray:
    """Gaussian-mirror ``W_j = |b+ + b-| - |b+ - b-|`` from OLS on ``[x_j + z_j, x_j - z_j, X_{-j}]``.

    The mirror pair spans the same space as ``(x_j, z_j)``, so
    ``b+ + b-`` and ``b+ - b-`` are the coefficients of ``x_j`` and ``z_j``
    in the OLS fit of ``y`` on ``[X, z_j]``.  Those come from the OLS fit on
    ``X`` by a one-column Frisch-Waugh update, avoiding ``p`` refits.
    """
    X = as_design(X)
    y = np.asarray(y, dtype=float)
    if X.n <= X.p + 1:
        raise DimensionError(f"Gaussian mirror needs n > p + 1, got n={X.n}, p={X.p}")
    U, d, V = X.svd.U, X.svd.d, X.svd.V
    G = _as_rng(seed).standard_normal((X.n, X.p))
    UG = U.T @ G
    G_perp = G - U @ UG
    res = X.partial_residuals
    sigma_sq = np.sum(res**2, axis=0)
    u = res / np.sqrt(sigma_sq)
    annih = np.sum(G_perp**2, axis=0) + np.sum(u * G, axis=0) ** 2
    scale = np.sqrt(sigma_sq / annih)
    beta_ols, _ = ols_fit(X, y)
    # coefficient of z_j = scale_j g_j in the fit on [X, z_j]
    b = (G_perp.T @ y) / (scale * np.sum(G_perp**2, axis=0))
    # j-th entry of (X^T X)^{-1} X^T z_j
    proj = scale * np.einsum("jk,kj->j", V, UG / d[:, None])
    a = beta_ols - b * proj
    return np.abs(a) - np.abs(b)


def gm_baseline(X: DesignMatrix, y, alpha: float = 0.1, seed=None, offset: float = 0.0) -> SelectionResult:
    w = gm_statistics(X, y, seed)
    sel = knockoff_threshold(w, alpha, offset)
    return SelectionResult(sel.rejected, sel.threshold, alpha, "gm", sel.n_features)


# --------------------------------------------------------------------------
# experiments
# --------------------------------------------------------------------------


def fdp_tdp(rejected, truth) -> tuple[float, float]:
    rejected = {int(j) for j in rejected}
    truth = {int(j) for j in truth}
    fdp = len(rejected - truth) / max(1, len(rejected))
    tdp = len(rejected & truth) / len(truth) if truth else 0.0
    return fdp, tdp


@dataclass
class SimulationConfig:
    """One simulation cell.  Field names double as config-file keys."""

    design: str = "gaussian"
    structure: str = "power_decay"
    rho: float = 0.4
    n: int = 1000
    p: int = 300
    p1: int = 30
    amplitude: float = 5.0
    alpha: float = 0.1
    replicates: int = 100
    seed: int = 0
    methods: tuple = ("oatk", "bh")
    offset: float = 0.0
    m_copies: int = 10
    gamma: float = 0.5
    derand_m: int = 30
    eta: float = 0.5
    mc_replicates: int = 200
    beta_level: float | None = None
    candidate_rule: str = "fast"
    design_path: str | None = None

    def __post_init__(self):
        self.methods = tuple(self.methods)
        self.validate()

    def validate(self) -> None:
        if self.design not in DESIGNS:
            raise ConfigError(f"unknown design {self.design!r}; expected one of {DESIGNS}")
        if self.design == "gaussian" and self.structure not in STRUCTURES:
            raise ConfigError(f"unknown structure {self.structure!r}; expected one of {STRUCTURES}")
        if self.design == "external" and not self.design_path:
            raise ConfigError("external design needs design_path")
        if not 0.0 <= self.rho < 1.0:
            raise ConfigError(f"rho must lie in [0, 1), got {self.rho}")
        if self.design != "external" and not 0 <= self.p1 <= self.p:
            raise ConfigError(f"p1={self.p1} must lie in [0, p={self.p}]")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.replicates < 1:
            raise ConfigError("replicates must be at least 1")
        unknown = [m for m in self.methods if m not in METHODS]
        if unknown:
            raise ConfigError(f"unknown method {unknown[0]!r}; known: {sorted(METHODS)}")

    @classmethod
    def from_mapping(cls, mapping: dict) -> "SimulationConfig":
        known = {f.name for f in fields(cls)}
        extra = set(mapping) - known
        if extra:
            raise ConfigError(f"unknown config key {sorted(extra)[0]!r}")
        kwargs = dict(mapping)
        if isinstance(kwargs.get("methods"), str):
            kwargs["methods"] = [m.strip() for m in kwargs["methods"].split(",") if m.strip()]
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc


MethodFn = Callable[[DesignMatrix, np.ndarray, SimulationConfig, int], np.ndarray]


def _m_oatk(X, y, cfg, seed):
    return oatk_select(X, y, cfg.alpha, offset=cfg.offset, seed=seed).selection.rejected


def _m_oatk_derand(X, y, cfg, seed):
    return oatk_derandomized(X, y, cfg.alpha, M=cfg.derand_m, eta=cfg.eta, offset=cfg.offset, seed=seed).rejected


def _m_oatk_multi(X, y, cfg, seed):
    return oatk_multi(X, y, cfg.alpha, M=cfg.m_copies, gamma=cfg.gamma, offset=cfg.offset, seed=seed).selection.rejected


def _m_coatk(X, y, cfg, seed):
    ccfg = CalibrationConfig(
        mc_replicates=cfg.mc_replicates, beta_level=cfg.beta_level, candidate_rule=cfg.candidate_rule
    )
    return calibrated_oatk(X, y, cfg.alpha, ccfg, seed).selection.rejected


def _m_bh(X, y, cfg, seed):
    return bh_baseline(X, y, cfg.alpha).rejected


def _m_gm(X, y, cfg, seed):
    return gm_baseline(X, y, cfg.alpha, seed, offset=cfg.offset).rejected


# Registry order fixes each method's RNG key; append new methods at the end.
METHODS: dict[str, MethodFn] = {
    "oatk": _m_oatk,
    "oatk_derand": _m_oatk_derand,
    "oatk_multi": _m_oatk_multi,
    "coatk": _m_coatk,
    "bh": _m_bh,
    "gm": _m_gm,
}

CSV_COLUMNS = (
    "design", "structure", "rho", "n", "p", "p1", "A", "alpha",
    "method", "replicate", "fdp", "tdp", "n_rejected", "seed",
)


def _seed_for(seed: int, *keys: int) -> int:
    return int(np.random.SeedSequence(entropy=seed, spawn_key=keys).generate_state(1)[0])


def _load_external(path: str) -> DesignMatrix:
    from .io import read_matrix

    values, names = read_matrix(path)
    return ingest_design(values, column_names=names)


@dataclass
class ExperimentResult:
    config: SimulationConfig
    rows: list[dict] = field(default_factory=list)
    failures: list[dict] = field(default_factory=list)

    def samples(self, method: str, key: str = "fdp") -> np.ndarray:
        return np.array([r[key] for r in self.rows if r["method"] == method], dtype=float)

    def summary(self) -> dict[str, dict[str, float]]:
        """Mean FDP (FDR) and mean TDP (power) per method, ignoring failed cells."""
        out = {}
        for m in self.config.methods:
            fdp = self.samples(m, "fdp")
            tdp = self.samples(m, "tdp")
            ok = ~np.isnan(fdp)
            out[m] = {
                "fdr": float(fdp[ok].mean()) if ok.any() else float("nan"),
                "power": float(tdp[ok].mean()) if ok.any() else float("nan"),
                "replicates": int(ok.sum()),
                "failed": int((~ok).sum()),
            }
        return out

    def write_csv(self, target) -> None:
        """Write the tidy table to a path or an open text stream."""
        if hasattr(target, "write"):
            self._write(target)
            return
        with open(target, "w", newline="") as fh:
            self._write(fh)

    def _write(self, fh) -> None:
        writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for row in self.rows:
            writer.writerow({k: _fmt(row[k]) for k in CSV_COLUMNS})


def _fmt(v):
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    return v


def _replicate(cfg: SimulationConfig, r: int, methods: dict[str, MethodFn], fixed: DesignMatrix | None):
    design_rng = np.random.default_rng(np.random.SeedSequence(entropy=cfg.seed, spawn_key=(r, 0)))
    response_rng = np.random.default_rng(np.random.SeedSequence(entropy=cfg.seed, spawn_key=(r, 1)))
    if fixed is not None:
        X = fixed
    elif cfg.design == "gaussian":
        X = gen_gaussian_design(cfg.structure, cfg.rho, cfg.n, cfg.p, design_rng)
    else:
        X = gen_markov_design(cfg.n, cfg.p, design_rng)
    y, truth, _ = gen_response(X, cfg.p1, cfg.amplitude, response_rng)
    keys = list(METHODS)
    rows, failures = [], []
    for name in cfg.methods:
        key = keys.index(name) if name in keys else len(keys) + sorted(methods).index(name)
        mseed = _seed_for(cfg.seed, r, 2, key)
        row = {
            "design": cfg.design,
            "structure": cfg.structure if cfg.design == "gaussian" else "",
            "rho": cfg.rho if cfg.design == "gaussian" else float("nan"),
            "n": X.n, "p": X.p, "p1": cfg.p1, "A": cfg.amplitude, "alpha": cfg.alpha,
            "method": name, "replicate": r, "seed": mseed,
        }
        try:
            rejected = np.asarray(methods[name](X, y, cfg, mseed), dtype=int)
            fdp, tdp = fdp_tdp(rejected, truth)
            row.update(fdp=fdp, tdp=tdp, n_rejected=int(rejected.size))
        except Exception as exc:  # noqa: BLE001 - one failing method must not stop the sweep
            row.update(fdp=float("nan"), tdp=float("nan"), n_rejected=float("nan"))
            failures.append({"method": name, "replicate": r, "error": f"{type(exc).__name__}: {exc}"})
        rows.append(row)
    return rows, failures


def run_experiment(cfg: SimulationConfig, threads: int = 1, extra_methods: dict[str, MethodFn] | None = None) -> ExperimentResult:
    """Run every configured method on the same fresh ``(X, y)`` per replicate.

    The RNG tree is ``seed -> replicate -> (design, response, method)``, so
    output does not depend on ``threads``.  A method that raises records NaN
    for that cell; the failure text is kept in ``result.failures``.
    """
    methods = dict(METHODS)
    if extra_methods:
        methods.update(extra_methods)
    missing = [m for m in cfg.methods if m not in methods]
    if missing:
        raise ConfigError(f"unknown method {missing[0]!r}")
    fixed = _load_external(cfg.design_path) if cfg.design == "external" else None

    def task(r):
        return _replicate(cfg, r, methods, fixed)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(task, range(cfg.replicates)))
    else:
        parts = [task(r) for r in range(cfg.replicates)]
    result = ExperimentResult(cfg)
    for rows, failures in parts:
        result.rows.extend(rows)
        result.failures.extend(failures)
    return result


def config_dict(cfg: SimulationConfig) -> dict:
    d = asdict(cfg)
    d["methods"] = list(cfg.methods)
    return d
