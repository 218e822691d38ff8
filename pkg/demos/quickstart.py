"""Select features on a simulated regression with basic, multi-copy and derandomized OATK.

Run with ``python demos/quickstart.py``.
"""

from __future__ import annotations

import oatk
from oatk.simulation import fdp_tdp


def main() -> None:
    X = oatk.gen_gaussian_design("power_decay", 0.5, n=300, p=60, seed=1)
    y, truth, _ = oatk.gen_response(X, p1=12, amplitude=5.0, seed=2)
    print(f"design: n={X.n}, p={X.p}, true signals={truth.tolist()}")

    runs = {
        "oatk": oatk.oatk_select(X, y, alpha=0.1, seed=3).selection.rejected,
        "oatk_multi": oatk.oatk_multi(X, y, alpha=0.1, M=9, seed=3).selection.rejected,
        "oatk_derand": oatk.oatk_derandomized(X, y, alpha=0.1, M=30, seed=3).rejected,
        "bh": oatk.bh_baseline(X, y, 0.1).rejected,
    }
    for name, rejected in runs.items():
        fdp, tdp = fdp_tdp(rejected, truth)
        print(f"{name:>12}: {len(rejected):3d} selected  FDP={fdp:.3f}  TDP={tdp:.3f}")


if __name__ == "__main__":
    main()
