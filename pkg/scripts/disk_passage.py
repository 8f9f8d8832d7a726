"""Planar front passing a disk and a rectangle: mean speed, post-passage gap and limit state."""
from __future__ import annotations

import argparse
import json
from dataclasses import replace

from bistable_obstacle.config import load_config
from bistable_obstacle.pipelines import prepare, run_passage

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default="configs/disk_passage.toml")
    ap.add_argument("--h", type=float, default=None)
    ap.add_argument("--out", default="out/passage")
    a = ap.parse_args()
    cfg = load_config(a.config)
    if a.h is not None:
        cfg = replace(cfg, domain=replace(cfg.domain, h=a.h))
    ctx = prepare(cfg)
    shapes = {"disk": replace(cfg.obstacle, kind="disk", r=0.5),
              "rectangle": replace(cfg.obstacle, kind="rectangle", width=1.0, height=0.5)}
    for name, obs in shapes.items():
        s = run_passage(replace(cfg, obstacle=obs), out_dir=f"{a.out}/{name}", ctx=ctx)
        r = s["results"]
        print(name, json.dumps({"gamma": r.get("gamma", {}).get("value"), "c": r["c"]["value"],
                                "gap": r["post_passage_gap"]["value"], "min_u_inf": r.get("min_u_inf", {}).get("value"),
                                "propagation": s["propagation"]}))
