"""Lotka-Volterra front speed against the positivity conditions over a parameter grid."""
from __future__ import annotations

import argparse

from bistable_obstacle.config import load_config
from bistable_obstacle.pipelines import lv_sweep

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default="configs/lv_sweep.toml")
    ap.add_argument("--out", default="out/lv_sweep")
    a = ap.parse_args()
    s = lv_sweep(load_config(a.config), a.out)
    for row in s["rows"]:
        conds = "".join(k for k in ("P1", "P2", "P3", "P4") if row.get(k))
        print(f"k1={row['k1']:<5} k2={row['k2']:<5} r={row['r']:<5} d={row['d']:<5} c={row['c']:+.5f} "
              f"conditions={conds or '-'} {row['error']}")
    print(s["results"])
