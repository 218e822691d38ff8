"""Small FDR/power sweep over signal amplitude, one CSV per amplitude.

Run with ``python demos/simulation_sweep.py [out_prefix]``.  The full-size
benchmark uses ``replicates=200``; this one keeps the run short.
"""

from __future__ import annotations

import sys

from oatk import SimulationConfig, run_experiment


def main(out: str | None = None) -> None:
    print(f"{'A':>4} {'method':>12} {'fdr':>7} {'power':>7}")
    for amplitude in (3.0, 4.0, 5.0):
        cfg = SimulationConfig(
            design="gaussian", structure="power_decay", rho=0.5, n=300, p=100, p1=20,
            amplitude=amplitude, alpha=0.1, replicates=40, seed=7,
            methods=("oatk", "oatk_multi", "bh", "gm"),
        )
        result = run_experiment(cfg, threads=2)
        for method, stats in result.summary().items():
            print(f"{amplitude:4.1f} {method:>12} {stats['fdr']:7.3f} {stats['power']:7.3f}")
        if out:
            result.write_csv(f"{out}_A{amplitude:g}.csv")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else None)
