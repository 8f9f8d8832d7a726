"""End-to-end pipelines behind the command line.

Each pipeline takes a resolved :class:`Config`, optionally an output
directory, and returns a summary dict.  Summaries hold only data derived from
the configuration (no wall-clock values), so identical configs give identical
summaries and CSV files.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .config import Config, make_obstacle, make_system
from .diagnostics import classify_propagation, global_mean_speed, write_csv
from .entire import approximate_entire_solution, extract_u_infinity
from .errors import LabError
from .front1d import FrontProfile, front_diagnostics, interpolant_residual, solve_planar_front
from .geometry import build_zeta, make_mask
from .grid_solver import Scenario, Simulation, write_trajectory
from .lotka import LVParams, lv_speed_conditions, lv_system, lv_transform
from .systems import audit_assumptions, build_pq
from . import verifier as V

PIPELINES = ("front", "passage", "entire", "limit", "verify", "lv-sweep")


@dataclass
class Context:
    cfg: Config
    system: object
    front: FrontProfile
    audit: object
    decay: object

    @property
    def ledger(self):
        return self.audit.ledger.with_front(self.decay.a, self.decay.b, self.front.c)


def prepare(cfg: Config) -> Context:
    sys_ = make_system(cfg.system)
    audit = audit_assumptions(sys_, seed=cfg.seed)
    prof = solve_planar_front(sys_, half_width=cfg.front.half_width, h=cfg.front.h, tol_res=cfg.front.tol_res)
    return Context(cfg, sys_, prof, audit, front_diagnostics(prof))


def _tag(value, source):
    return {"value": None if value is None else float(value), "source": source}


def _front_block(ctx: Context) -> dict:
    d = ctx.decay
    return {
        "c": _tag(ctx.front.c, "computed: front solve"),
        "a": _tag(d.a, "estimated: tail envelope"),
        "b": _tag(d.b, "estimated: tail fit"),
        "Kbar1": _tag(d.Kbar1, "estimated: derivative ratio"),
        "C_concave": _tag(d.Cconc, "estimated: concavity threshold"),
        "ode_residual": _tag(ctx.front.residual, "computed: discrete residual"),
        "interpolant_residual": _tag(interpolant_residual(ctx.system, ctx.front), "computed: midpoint residual"),
    }


def _out(out_dir) -> Optional[Path]:
    if out_dir is None:
        return None
    p = Path(out_dir)
    p.mkdir(parents=True, exist_ok=True)
    return p


# ------------------------------------------------------------------ front


def run_front(cfg: Config, out_dir=None, ctx: Optional[Context] = None) -> dict:
    ctx = ctx or prepare(cfg)
    out = _out(out_dir)
    summary = {"pipeline": "front", "results": _front_block(ctx), "assumptions_ok": bool(ctx.audit.ok),
               "constants": ctx.ledger.as_dict()}
    if cfg.system.kind == "lv":
        p = LVParams(cfg.system.k1, cfg.system.k2, cfg.system.r, cfg.system.d)
        cond = lv_speed_conditions(p)
        summary["lv_conditions"] = {k: (v if isinstance(v, (bool, int)) or v is None else bool(v)) for k, v in cond.items()}
    if out is not None:
        vals = ctx.front.values
        if cfg.system.kind == "lv" and cfg.system.frame == "original":
            vals = lv_transform(vals)
        rows = [[x, *vals[:, k], *ctx.front.deriv[:, k]] for k, x in enumerate(ctx.front.xi)]
        m = ctx.front.m
        write_csv(out / "front.csv", ["xi"] + [f"phi_{i + 1}" for i in range(m)] + [f"dphi_{i + 1}" for i in range(m)], rows)
        (out / "front.txt").write_text(ctx.front.to_text())
    return summary


# ---------------------------------------------------------------- passage


def passage_scenario(cfg: Config, ctx: Context, t_end: Optional[float] = None) -> Scenario:
    d, r = cfg.domain, cfg.run
    return Scenario(system=ctx.system, rect=tuple(d.rect), h=d.h, obstacle=make_obstacle(cfg.obstacle), t_start=0.0,
                    t_end=r.t_end if t_end is None else t_end, snapshot_every=r.snapshot_every,
                    init={"kind": "front", "shift": r.shift}, far_field=d.far_field, neumann_mode=d.neumann_mode,
                    front=ctx.front, Lambda=ctx.audit.ledger.Lambda, label=cfg.label)


def post_passage_gap(sim: Simulation, u: np.ndarray, t: float, window) -> float:
    """Sup distance to the planar front over cells with ``x1 + c t + shift`` in ``window``."""
    prof = sim.scen.front
    z = sim.xy[0] + prof.c * t + float(sim.scen.init.get("shift", 0.0))
    sel = (z >= window[0]) & (z <= window[1])
    if not sel.any():
        return float("nan")
    return float(np.abs(u[:, sel] - sim.front_values(t)[:, sel]).max())


def run_passage(cfg: Config, out_dir=None, ctx: Optional[Context] = None, speed: bool = True) -> dict:
    ctx = ctx or prepare(cfg)
    out = _out(out_dir)
    scen = passage_scenario(cfg, ctx)
    sim = Simulation(scen)
    traj = sim.run()
    t_last, u_last = traj.times[-1], traj.states[-1]
    res = {"c": _tag(ctx.front.c, "computed: front solve")}
    summary = {"pipeline": "passage" if speed else "limit", "results": res, "constants": ctx.ledger.as_dict()}
    res["post_passage_gap"] = _tag(post_passage_gap(sim, u_last, t_last, cfg.limit.gap_window), "computed: simulation")
    res["steps"] = _tag(traj.stats["steps"], "computed: simulation")
    res["dt"] = _tag(sim.dt, "formula: 0.9 / (4 Dbar / h^2 + Lambda)")
    res["overshoot"] = _tag(traj.stats.get("overshoot", 0.0), "computed: simulation")
    if speed:
        try:
            est = global_mean_speed(traj, level=cfg.run.level)
            res["gamma"] = _tag(est.gamma, "computed: interface regression")
            res["gamma_stderr"] = _tag(est.stderr, "computed: interface regression")
            res["gamma_rel_error"] = _tag(abs(est.gamma - ctx.front.c) / ctx.front.c, "computed")
            if out is not None:
                write_csv(out / "speed_pairs.csv", ["elapsed", "distance"], est.pairs.tolist())
        except LabError as exc:
            summary["speed_error"] = str(exc)
    try:
        lim = extract_u_infinity(sim, u_last, window=cfg.limit.window, relax_time=cfg.limit.relax_time, tol=cfg.limit.tol)
        verdict = classify_propagation(lim)
        res["min_u_inf"] = _tag(lim.min_value, "computed: relaxed limit")
        res["u_inf_residual"] = _tag(lim.residual, "computed: relaxed limit")
        res["u_inf_far_deviation"] = _tag(lim.far_field_deviation, "computed: relaxed limit")
        summary["propagation"] = verdict.kind
        summary["min_location"] = [float(v) for v in lim.min_location]
    except LabError as exc:
        summary["propagation"] = "undecided"
        summary["limit_error"] = str(exc)
    if out is not None:
        rows = [[e[k] for k in traj.events[0]] for e in traj.events]
        write_csv(out / "events.csv", list(traj.events[0]), rows)
        if cfg.run.write_snapshots:
            write_trajectory(traj, out / "snapshots")
    summary["_trajectory"] = traj
    return summary


def run_limit(cfg: Config, out_dir=None, ctx: Optional[Context] = None) -> dict:
    return run_passage(cfg, out_dir, ctx, speed=False)


# ----------------------------------------------------------------- entire


def run_entire(cfg: Config, out_dir=None, ctx: Optional[Context] = None) -> dict:
    ctx = ctx or prepare(cfg)
    out = _out(out_dir)
    e = cfg.entire
    scen = Scenario(system=ctx.system, rect=tuple(cfg.domain.rect), h=cfg.domain.h, obstacle=make_obstacle(cfg.obstacle),
                    t_end=e.t_end, init={"kind": "front", "shift": e.shift}, far_field=cfg.domain.far_field,
                    neumann_mode=cfg.domain.neumann_mode, front=ctx.front, Lambda=ctx.audit.ledger.Lambda,
                    snapshot_every=cfg.run.snapshot_every, label=cfg.label)
    n_list = [d / ctx.front.c for d in e.distances]
    E = approximate_entire_solution(scen, n_list, init_mode=e.init_mode, t_end=e.t_end, margin=e.margin,
                                    snapshot_every=cfg.run.snapshot_every)
    g = [E.gaps[n] for n in E.n_list[:-1]]
    res = {
        "c": _tag(ctx.front.c, "computed: front solve"),
        "min_time_derivative": _tag(E.min_time_derivative, "computed: largest-n run"),
        "front_gap": _tag(E.front_gap, "computed: largest-n run at t = -n + 5/c"),
        "max_n_violation": _tag(E.max_n_violation, "computed: consecutive runs"),
    }
    summary = {"pipeline": "entire", "results": res, "n": E.n_list, "g": g,
               "g_strictly_decreasing": bool(all(b < a for a, b in zip(g[:-1], g[1:]))),
               "n_monotone_violations": E.n_monotone_violations, "constants": ctx.ledger.as_dict()}
    if out is not None:
        write_csv(out / "entire_gaps.csv", ["n", "g"], [[n, E.gaps[n]] for n in E.n_list[:-1]])
    summary["_entire"] = E
    return summary


# ----------------------------------------------------------------- verify


def verify_setup(cfg: Config, ctx: Context):
    obs = make_obstacle(cfg.obstacle)
    grid = make_mask(obs, tuple(cfg.domain.rect), cfg.domain.h)
    led = ctx.ledger.with_obstacle(max(obs.bound_radius, 1.0) if not obs.empty else 1.0)
    pq = build_pq(ctx.audit.pf)
    zeta = build_zeta(obs, grid, led.eta, led.Dbar)
    return led, pq, zeta, grid


def run_verify(cfg: Config, out_dir=None, ctx: Optional[Context] = None) -> dict:
    ctx = ctx or prepare(cfg)
    out = _out(out_dir)
    v = cfg.verify
    led, pq, zeta, grid = verify_setup(cfg, ctx)
    reports = []
    if "growing" in v.candidates:
        pair = V.build_growing_pair(led, pq, zeta, ctx.front, safety=v.safety, grid=grid)
        reports += [pair.upper, pair.lower]
    if "expanding" in v.candidates:
        reports.append(V.build_key_subsolution(led, pq, zeta, ctx.front, safety=v.safety, grid=grid))
    if "decaying" in v.candidates:
        pair = V.build_decaying_pair(led, pq, zeta, ctx.front, safety=v.safety, grid=grid)
        reports += [pair.lower, pair.upper]
    results, texts = {}, []
    for cand in reports:
        r = V.operator_residual(cand, ctx.system, n=v.samples, seed=cfg.seed, tol_rel=v.tol_rel)
        results[cand.name] = {
            "kind": r.kind, "passed": r.passed, "samples": r.n_samples, "violations": int(len(r.violations)),
            "boundary_violations": r.boundary_violations,
            "min": [float(x) for x in r.min], "max": [float(x) for x in r.max],
            "margin": _tag(r.margin, "computed: min slack in units of tolerance"),
            "derivative_check": None if not np.isfinite(r.derivative_error) else float(r.derivative_error),
            "constants": {k: _tag(val, "formula: ledger with safety factor") for k, val in cand.constants.items()
                          if np.isscalar(val)},
        }
        texts.append(r.to_text())
    summary = {"pipeline": "verify", "results": results, "all_passed": all(x["passed"] for x in results.values()),
               "constants": led.as_dict()}
    if out is not None:
        (out / "residual_report.txt").write_text("\n\n".join(texts) + "\n")
        write_csv(out / "verify.csv", ["candidate", "kind", "samples", "violations", "min_1", "max_1", "margin"],
                  [[k, x["kind"], x["samples"], x["violations"], x["min"][0], x["max"][0], x["margin"]["value"]]
                   for k, x in results.items()])
    return summary


# --------------------------------------------------------------- LV sweep


def lv_sweep(cfg: Config, out_dir=None) -> dict:
    """Speed sign against the positivity conditions on a parameter grid; failures are recorded per point."""
    out = _out(out_dir)
    s = cfg.sweep
    rows = []
    for k1 in s.k1:
        for k2 in s.k2:
            for r in s.r:
                for d in s.d:
                    row = {"k1": k1, "k2": k2, "r": r, "d": d}
                    try:
                        p = LVParams(k1, k2, r, d)
                        cond = lv_speed_conditions(p)
                        row.update({k: bool(cond[k]) for k in ("P1", "P2", "P3", "P4")})
                        row["any"] = bool(cond["any"])
                        prof = solve_planar_front(lv_system(p), half_width=cfg.front.half_width, h=cfg.front.h)
                        row["c"] = prof.c
                        row["agree"] = bool(prof.c > s.speed_tol) if row["any"] else None
                        row["error"] = ""
                    except LabError as exc:
                        row.setdefault("c", float("nan"))
                        row["agree"] = None
                        row["error"] = str(exc).replace(",", ";")
                    rows.append(row)
    header = ["k1", "k2", "r", "d", "P1", "P2", "P3", "P4", "any", "c", "agree", "error"]
    if out is not None:
        write_csv(out / "lv_sweep.csv", header, [[row.get(k, "") for k in header] for row in rows])
    disagreements = [r for r in rows if r.get("agree") is False]
    return {"pipeline": "lv-sweep", "results": {"points": len(rows), "disagreements": len(disagreements),
                                                "failures": sum(1 for r in rows if r["error"])}, "rows": rows}


def run(name: str, cfg: Config, out_dir=None) -> dict:
    if name not in PIPELINES:
        raise LabError(f"unknown pipeline {name!r}; choose from {', '.join(PIPELINES)}")
    if name == "lv-sweep":
        return lv_sweep(cfg, out_dir)
    fn = {"front": run_front, "passage": run_passage, "entire": run_entire, "limit": run_limit, "verify": run_verify}[name]
    return fn(cfg, out_dir)
