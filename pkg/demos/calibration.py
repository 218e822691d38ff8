"""Conditionally calibrated OATK with e-values and eBH.

Run with ``python demos/calibration.py``.
"""

from __future__ import annotations

import numpy as np

import oatk
from oatk.simulation import fdp_tdp


def main() -> None:
    X = oatk.gen_gaussian_design("power_decay", 0.5, n=300, p=60, seed=11)
    y, truth, _ = oatk.gen_response(X, p1=20, amplitude=6.0, seed=12)
    cfg = oatk.CalibrationConfig(mc_replicates=100)
    res = oatk.calibrated_oatk(X, y, alpha=0.1, cfg=cfg, seed=13)
    ev = res.evalues
    print(f"candidates simulated: {ev.candidates.tolist()}")
    print(f"nonzero e-values: {np.flatnonzero(ev.e).tolist()}  sum={ev.total:.2f} (p={X.p})")
    fdp, tdp = fdp_tdp(res.selection.rejected, truth)
    print(f"eBH selected {res.selection.rejected.tolist()}  FDP={fdp:.3f}  TDP={tdp:.3f}")


if __name__ == "__main__":
    main()
