"""Command line: ``bistable-obstacle <pipeline> --config FILE [--override k=v]... [--assert] [--out DIR]``."""
from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from importlib import metadata
from pathlib import Path

import numpy as np

from .config import load_config
from .errors import LabError
from .pipelines import PIPELINES, run


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items() if not k.startswith("_")}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return None if not np.isfinite(obj) else float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def _versions() -> dict:
    out = {}
    for pkg in ("artifact", "numpy", "scipy", "scikit-image"):
        try:
            out[pkg] = metadata.version(pkg)
        except metadata.PackageNotFoundError:
            out[pkg] = None
    return out


def verdict_failures(name: str, summary: dict) -> list:
    """Verdict-level failures checked under ``--assert``."""
    res = summary.get("results", {})
    fails = []
    if name == "front" and not res["c"]["value"] > 0:
        fails.append("front speed is not positive")
    if name in ("passage", "limit") and summary.get("propagation") != "complete":
        fails.append(f"propagation is {summary.get('propagation')}")
    if name == "passage" and res.get("gamma_rel_error", {}).get("value", np.inf) > 0.05:
        fails.append("mean speed differs from c by more than 5%")
    if name == "entire" and not summary.get("g_strictly_decreasing"):
        fails.append("gaps between consecutive start offsets do not decrease")
    if name == "verify" and not summary.get("all_passed"):
        fails.append("a candidate failed its sign check")
    if name == "lv-sweep" and res.get("disagreements"):
        fails.append(f"{res['disagreements']} sweep points contradict a positivity condition")
    return fails


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="bistable-obstacle", description=__doc__)
    ap.add_argument("pipeline", choices=PIPELINES)
    ap.add_argument("--config", required=True, help="TOML or JSON scenario file")
    ap.add_argument("--override", action="append", default=[], metavar="KEY=VAL", help="e.g. domain.h=0.1")
    ap.add_argument("--assert", dest="assert_", action="store_true", help="exit non-zero on verdict failures")
    ap.add_argument("--out", default="out", help="output directory")
    args = ap.parse_args(argv)

    try:
        cfg = load_config(args.config, args.override)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        t0 = time.perf_counter()
        summary = run(args.pipeline, cfg, out)
        wall = time.perf_counter() - t0
    except LabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    report = _jsonable(dict(summary, config=cfg.as_dict(), scenario_hash=cfg.digest))
    (out / "summary.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    outputs = sorted(str(p.relative_to(out)) for p in out.rglob("*") if p.is_file() and p.name != "manifest.json")
    digests = {p: hashlib.sha256((out / p).read_bytes()).hexdigest() for p in outputs}
    manifest = {
        "pipeline": args.pipeline,
        "scenario_hash": cfg.digest,
        "versions": _versions(),
        "ledger": report.get("constants"),
        "outputs": digests,
        "wall_clock_s": wall,
        "steps": report.get("results", {}).get("steps"),
    }
    (out / "manifest.json").write_text(json.dumps(_jsonable(manifest), indent=2, sort_keys=True) + "\n")

    headline = {k: v["value"] if isinstance(v, dict) and "value" in v else v
                for k, v in report.get("results", {}).items() if not isinstance(v, dict) or "value" in v}
    print(json.dumps({"pipeline": args.pipeline, **headline,
                      **{k: report[k] for k in ("propagation", "all_passed") if k in report}}, default=str))
    if args.assert_:
        fails = verdict_failures(args.pipeline, report)
        for f in fails:
            print(f"assert: {f}", file=sys.stderr)
        return 1 if fails else 0
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
