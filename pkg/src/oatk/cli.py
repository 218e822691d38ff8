"""Command-line front end: ``oatk select | derandomize | calibrate | simulate``.

Reports are JSON documents with sorted keys; infinite thresholds become
``null``.  Exit status is 0 on success, 2 for parse or configuration errors
and 3 for dimension or rank errors.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from . import __version__
from .calibration import CalibrationConfig, calibrated_oatk
from .exceptions import ConfigError, DimensionError, LeverageOne, OATKError, RankDeficient
from .io import clean_mutation_table, read_matrix, read_response
from .linalg import DesignMatrix, column_geometry, ingest_design
from .procedure import oatk_derandomized, oatk_multi, oatk_select, prepare
from .selection import bh, knockoff_threshold, ols_t_pvalues
from .simulation import SimulationConfig, config_dict, gm_statistics, run_experiment

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIMENSION = 3

SELECT_METHODS = ("oatk", "oatk_multi", "bh", "gm")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_CONFIG)


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else None
    return v


def dumps_report(report: dict) -> str:
    return json.dumps(_jsonable(report), sort_keys=True, indent=2, allow_nan=False) + "\n"


def resolve_cli_seed(seed: int | None) -> int:
    """``--seed``, else ``OATK_SEED``, else a fresh seed (reported in the output)."""
    if seed is not None:
        return seed
    env = os.environ.get("OATK_SEED")
    if env is not None and env.strip():
        try:
            return int(env)
        except ValueError:
            raise argparse.ArgumentTypeError(f"OATK_SEED must be an integer, got {env!r}") from None
    return int(np.random.SeedSequence().generate_state(1)[0])


def _load_data(args) -> tuple[DesignMatrix, np.ndarray]:
    raw, names = read_matrix(args.design, allow_missing=args.clean)
    y = read_response(args.response, allow_missing=args.clean)
    if y.shape[0] != raw.shape[0]:
        raise DimensionError(
            f"response {args.response} has {y.shape[0]} rows but design {args.design} has {raw.shape[0]}"
        )
    if args.clean:
        table = clean_mutation_table(raw, y, names, min_count=args.min_count)
        raw, y, names = table.X, table.y, table.names
    if args.center:
        y = y - y.mean()
    X = ingest_design(raw, center=args.center, column_names=names)
    if X.n <= X.p:
        raise DimensionError(f"need n > p, got n={X.n}, p={X.p}")
    return X, y


def _base_report(command: str, method: str, X: DesignMatrix, args, seed: int) -> dict:
    report = {
        "command": command,
        "method": method,
        "alpha": args.alpha,
        "seed": seed,
        "n": X.n,
        "p": X.p,
    }
    if X.column_names is not None:
        report["names"] = list(X.column_names)
    return report


def _finish(report: dict, X: DesignMatrix, rejected) -> dict:
    rejected = [int(j) for j in rejected]
    report["rejected"] = rejected
    report["n_rejected"] = len(rejected)
    if X.column_names is not None:
        report["rejected_names"] = [X.column_names[j] for j in rejected]
    return report


def _ridge_fields(report: dict, ctx) -> None:
    report["lambda"] = ctx.lam
    report["sigma_sq"] = ctx.geometry.sigma_sq
    report["s"] = ctx.s


def cmd_select(args) -> dict:
    X, y = _load_data(args)
    seed = resolve_cli_seed(args.seed)
    report = _base_report("select", args.method, X, args, seed)
    if args.method in ("oatk", "oatk_multi"):
        ctx = prepare(X, y, lam=args.lam)
        _ridge_fields(report, ctx)
        report["offset_c"] = args.offset_c
        if args.method == "oatk":
            res = oatk_select(X, y, args.alpha, offset=args.offset_c, seed=seed, context=ctx)
            report["w"] = res.w
            report["threshold"] = res.selection.threshold
            return _finish(report, X, res.selection.rejected)
        M = 10 if args.m_copies is None else args.m_copies
        res = oatk_multi(X, y, args.alpha, M=M, gamma=args.gamma, offset=args.offset_c, seed=seed, context=ctx)
        report.update(m_copies=M, gamma=args.gamma, p_values=res.pvalues.p_vals, threshold=res.selection.threshold)
        return _finish(report, X, res.selection.rejected)
    report["sigma_sq"] = column_geometry(X, 0.0).sigma_sq
    if args.method == "bh":
        pv = ols_t_pvalues(X, y)
        res = bh(pv, args.alpha)
        report.update(p_values=pv, threshold=res.threshold)
        return _finish(report, X, res.rejected)
    w = gm_statistics(X, y, np.random.default_rng(seed))
    res = knockoff_threshold(w, args.alpha, args.offset_c)
    report.update(w=w, threshold=res.threshold, offset_c=args.offset_c)
    return _finish(report, X, res.rejected)


def cmd_derandomize(args) -> dict:
    X, y = _load_data(args)
    seed = resolve_cli_seed(args.seed)
    M = 30 if args.m_copies is None else args.m_copies
    ctx = prepare(X, y, lam=args.lam)
    res = oatk_derandomized(X, y, args.alpha, M=M, eta=args.eta, offset=args.offset_c, seed=seed, context=ctx)
    report = _base_report("derandomize", "oatk", X, args, seed)
    _ridge_fields(report, ctx)
    first = res.runs[0]
    report.update(
        offset_c=args.offset_c,
        m_copies=M,
        eta=args.eta,
        frequencies=res.derandomized.frequencies,
        w=first.w,
        threshold=first.selection.threshold,
    )
    return _finish(report, X, res.rejected)


def cmd_calibrate(args) -> dict:
    X, y = _load_data(args)
    seed = resolve_cli_seed(args.seed)
    offset = 1.0 if args.offset_c is None else args.offset_c
    cfg = CalibrationConfig(mc_replicates=args.mc_replicates, offset=offset, candidate_rule=args.candidates)
    res = calibrated_oatk(X, y, args.alpha, cfg, seed)
    ev = res.evalues
    report = _base_report("calibrate", "coatk", X, args, seed)
    report["sigma_sq"] = column_geometry(X, 0.0).sigma_sq
    report.update(
        offset_c=offset,
        mc_replicates=args.mc_replicates,
        e_values=ev.e,
        e_value_sum=ev.total,
        candidates=ev.candidates,
        w=ev.w,
        threshold=ev.threshold,
        k_hat=res.selection.threshold,
    )
    return _finish(report, X, res.selection.rejected)


def _summary_table(summary: dict) -> str:
    lines = [f"{'method':<12} {'FDR':>8} {'power':>8} {'reps':>6} {'failed':>6}"]
    for m, s in summary.items():
        lines.append(f"{m:<12} {s['fdr']:>8.4f} {s['power']:>8.4f} {s['replicates']:>6d} {s['failed']:>6d}")
    return "\n".join(lines)


def load_config(path) -> SimulationConfig:
    """Read a flat JSON object whose keys are :class:`SimulationConfig` fields."""
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a JSON object")
    nested = [k for k, v in data.items() if isinstance(v, dict)]
    if nested:
        raise ConfigError(f"{path}: config must be flat, key {nested[0]!r} is nested")
    return SimulationConfig.from_mapping(data)


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    overrides = {}
    if args.seed is not None or os.environ.get("OATK_SEED"):
        overrides["seed"] = resolve_cli_seed(args.seed)
    if args.method:
        overrides["methods"] = args.method
    if overrides:
        cfg = SimulationConfig.from_mapping({**config_dict(cfg), **overrides})
    result = run_experiment(cfg, threads=args.threads)
    if args.output:
        result.write_csv(args.output)
        out = sys.stdout
    else:
        result.write_csv(sys.stdout)
        out = sys.stderr
    print(_summary_table(result.summary()), file=out)
    for f in result.failures:
        print(f"failed: {f['method']} replicate {f['replicate']}: {f['error']}", file=sys.stderr)
    return EXIT_OK


def _data_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--design", "-X", required=True, help="design matrix CSV (n x p)")
    p.add_argument("--response", "-y", required=True, help="response CSV (n x 1)")
    p.add_argument("--alpha", type=float, default=0.1, help="target FDR (default 0.1)")
    p.add_argument("--lambda", dest="lam", type=float, default=None, help="fixed ridge penalty instead of LOOCV")
    p.add_argument("--seed", type=int, default=None, help="RNG seed (falls back to OATK_SEED)")
    p.add_argument("--center", action="store_true", help="center design columns and the response")
    p.add_argument("--clean", action="store_true", help="drop incomplete rows, duplicate rows and rare columns")
    p.add_argument("--min-count", type=int, default=10, help="rare-column cutoff for --clean (default 10)")
    p.add_argument("--output", "-o", default=None, help="write the JSON report here instead of stdout")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="oatk", description="One-at-a-time knockoff variable selection.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("select", help="run one selection procedure on a dataset")
    _data_args(p)
    p.add_argument("--method", choices=SELECT_METHODS, default="oatk")
    p.add_argument("--offset-c", type=float, default=0.0, help="offset c in the knockoff threshold (default 0)")
    p.add_argument("--gamma", type=float, default=0.5, help="SeqStep+ gamma for oatk_multi (default 0.5)")
    p.add_argument("--m-copies", type=int, default=None, help="knockoff copies for oatk_multi (default 10)")
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("derandomize", help="OATK with rejection frequencies over M residual draws")
    _data_args(p)
    p.add_argument("--offset-c", type=float, default=0.0)
    p.add_argument("--eta", type=float, default=0.5, help="frequency cutoff (default 0.5)")
    p.add_argument("--m-copies", type=int, default=None, help="number of draws M (default 30)")
    p.set_defaults(func=cmd_derandomize)

    p = sub.add_parser("calibrate", help="conditionally calibrated OATK with e-values")
    _data_args(p)
    p.add_argument("--offset-c", type=float, default=None, help="offset c (default 1)")
    p.add_argument("--mc-replicates", type=int, default=200, help="Monte Carlo draws per feature (default 200)")
    p.add_argument("--candidates", choices=("fast", "full"), default="fast", help="which features to calibrate")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("simulate", help="run a simulation sweep from a flat JSON config")
    p.add_argument("--config", "-c", required=True, help="flat JSON object of SimulationConfig fields")
    p.add_argument("--output", "-o", default=None, help="tidy CSV path (stdout when omitted)")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--method", action="append", default=None, help="override the method list (repeatable)")
    p.add_argument("--threads", type=int, default=1, help="worker threads for replicates (default 1)")
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        result = args.func(args)
    except (DimensionError, RankDeficient, LeverageOne) as exc:
        print(f"oatk: error: {exc}", file=sys.stderr)
        return EXIT_DIMENSION
    except (OATKError, ValueError, OSError, argparse.ArgumentTypeError) as exc:
        print(f"oatk: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if isinstance(result, dict):
        text = dumps_report(result)
        if args.output:
            with open(args.output, "w") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)
        return EXIT_OK
    return result


if __name__ == "__main__":  # pragma: no cover
    raise SystemExit(main())
