"""Entire solutions emanating from a planar front, and their large-time limit.

For each start offset ``n`` the system is solved from ``t = -n`` with initial
data close to the planar front.  Runs share one time lattice anchored at the
earliest start, so snapshots of different runs can be compared cell by cell.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import EntireError
from .geometry import make_mask, no_obstacle
from .grid_solver import Scenario, Simulation, StateGrid, residual_elliptic

UpperFn = Callable[[float, np.ndarray], np.ndarray]


@dataclass
class EntireApprox:
    n_list: list
    starts: dict  # n -> start time on the shared lattice
    times: dict  # n -> list of snapshot times
    states: dict  # n -> list of (m, n_cells) arrays
    gaps: dict  # n -> sup |u_{next n} - u_n| on the overlap
    n_monotone_violations: int
    max_n_violation: float
    min_time_derivative: float
    front_gap: float
    sim: Simulation
    summary: dict = field(default_factory=dict)

    @property
    def largest(self):
        n = self.n_list[-1]
        return self.times[n], self.states[n]

    def limit_snapshot(self) -> np.ndarray:
        return self.states[self.n_list[-1]][-1]


def _strip_reference(scen: Scenario, sim: Simulation) -> Simulation:
    """One-row obstacle-free copy of the scenario with the same cells in x and the same dt."""
    h = scen.h
    x_lo, x_hi = scen.rect[0], scen.rect[1]
    strip = scen.replace(obstacle=no_obstacle(), rect=(x_lo, x_hi, -0.5 * h, 0.5 * h), dt=sim.dt, Lambda=sim.Lambda)
    return Simulation(strip, grid=make_mask(no_obstacle(), strip.rect, h))


def approximate_entire_solution(
    scen: Scenario,
    n_list,
    init_mode: str = "front",
    snapshot_every: float = 1.0,
    upper: Optional[UpperFn] = None,
    t_end: Optional[float] = None,
    margin: float = 5.0,
) -> EntireApprox:
    """Solve from each ``t = -n`` and compare consecutive runs on their common window."""
    ns = sorted(float(n) for n in n_list)
    if len(ns) < 2:
        raise EntireError("insufficient-overlap: need at least two start offsets")
    prof = scen.front
    if prof is None:
        raise EntireError("entire-solution runs need a front profile")
    s0 = float(scen.init.get("shift", 0.0))
    R = scen.obstacle.bound_radius
    for n in ns:
        pos = prof.c * n - s0  # abscissa of the half level at t = -n
        if pos - R < margin:
            raise EntireError(f"front-overlaps-obstacle: at t=-{n:.4g} the front sits at x1={pos:.3g}, obstacle radius {R}")
        if pos + margin > scen.rect[1]:
            raise EntireError(f"front-overlaps-obstacle: start x1={pos:.3g} is outside the box {scen.rect}")
    if init_mode not in ("front", "supersolution"):
        raise EntireError(f"unknown init_mode {init_mode!r}")
    if init_mode == "supersolution" and upper is None:
        raise EntireError("supersolution init needs the upper barrier evaluator")

    n_max = ns[-1]
    t_end = scen.t_end if t_end is None else float(t_end)
    sim = Simulation(scen.replace(t_start=-n_max, far_field=scen.far_field))
    dt = sim.dt
    stride = max(1, int(round(snapshot_every / dt)))
    k_end = int(round((t_end + n_max) / dt))
    k_start = {n: int(round((n_max - n) / dt)) for n in ns}

    # initial data per run
    inits = {}
    if init_mode == "front":
        inits[n_max] = sim.front_values(-n_max)
        ref = _strip_reference(scen, sim)
        st = StateGrid(ref.front_values(-n_max), -n_max)
        cols = sim.cells[:, 1]
        k = 0
        for n in ns[:-1][::-1]:
            while k < k_start[n]:
                st = ref.step(st)
                k += 1
            inits[n] = st.u[:, cols]
    else:
        for n in ns:
            inits[n] = upper(-n_max + k_start[n] * dt, sim.xy)

    times, states = {}, {}
    for n in ns:
        st = StateGrid(np.clip(inits[n], 0.0, 1.0), -n_max + k_start[n] * dt)
        ts, us = [st.t], [st.u.copy()]
        for k in range(k_start[n] + 1, k_end + 1):
            st = sim.step(st)
            if k % stride == 0 or k == k_end:
                ts.append(st.t)
                us.append(st.u.copy())
        times[n], states[n] = ts, us

    # compare consecutive runs on common snapshot times
    gaps, nviol, maxviol = {}, 0, 0.0
    for a, b in zip(ns[:-1], ns[1:]):
        ta = {round(t / dt): u for t, u in zip(times[a], states[a])}
        sup = 0.0
        for t, u in zip(times[b], states[b]):
            key = round(t / dt)
            if key in ta:
                diff = u - ta[key]
                sup = max(sup, float(np.abs(diff).max()))
                over = diff > 1e-6  # u_{larger n} should not exceed u_{smaller n}
                nviol += int(over.sum())
                maxviol = max(maxviol, float(diff.max()))
        gaps[a] = sup

    T, U = times[n_max], states[n_max]
    dmin = np.inf
    for k in range(1, len(T)):
        dmin = min(dmin, float(((U[k] - U[k - 1]) / (T[k] - T[k - 1])).min()))
    t_check = -n_max + 5.0 / prof.c
    j = int(np.argmin(np.abs(np.array(T) - t_check)))
    front_gap = float(np.abs(U[j] - sim.front_values(T[j])).max())

    summary = {
        "n": ns,
        "g": [gaps.get(n) for n in ns],
        "n_monotone_violations": nviol,
        "max_n_violation": maxviol,
        "min_time_derivative": dmin,
        "front_gap": front_gap,
        "front_gap_time": T[j],
        "init_mode": init_mode,
    }
    return EntireApprox(ns, {n: -n_max + k_start[n] * dt for n in ns}, times, states, gaps, nviol, maxviol, dmin,
                        front_gap, sim, summary)


# ------------------------------------------------------------------ limit


@dataclass
class LimitState:
    u: np.ndarray
    sim: Simulation
    residual: float
    residual_l2: float
    far_field_deviation: float
    min_value: float
    min_location: np.ndarray
    converged: bool
    relax_time: float
    tol: float

    @property
    def is_one(self) -> bool:
        return self.min_value >= 1.0 - 10.0 * self.tol


def window_simulation(sim: Simulation, window) -> tuple[Simulation, np.ndarray]:
    """Homogeneous-Neumann copy of ``sim`` on a sub-box snapped to its cells, plus the cell map."""
    g = sim.grid
    h = g.h
    i0 = int(np.floor((window[0] - g.x_lo) / h + 1e-9))
    i1 = int(np.ceil((window[1] - g.x_lo) / h - 1e-9))
    j0 = int(np.floor((window[2] - g.y_lo) / h + 1e-9))
    j1 = int(np.ceil((window[3] - g.y_lo) / h - 1e-9))
    i0, j0 = max(i0, 0), max(j0, 0)
    i1, j1 = min(i1, g.nx), min(j1, g.ny)
    rect = (g.x_lo + i0 * h, g.x_lo + i1 * h, g.y_lo + j0 * h, g.y_lo + j1 * h)
    sub = sim.scen.replace(rect=rect, far_field="neumann", dt=sim.dt, Lambda=sim.Lambda)
    wsim = Simulation(sub)
    full = -np.ones(g.fluid.shape, dtype=np.int64)
    full[sim.cells[:, 0], sim.cells[:, 1]] = np.arange(len(sim.cells))
    src = full[wsim.cells[:, 0] + j0, wsim.cells[:, 1] + i0]
    if np.any(src < 0):
        raise EntireError("window cells do not match the parent grid")
    return wsim, src


def extract_u_infinity(sim: Simulation, u: np.ndarray, window=(-10.0, 10.0, -10.0, 10.0), relax_time: float = 200.0,
                       tol: float = 1e-5, far_radius: Optional[float] = None, check_every: int = 50) -> LimitState:
    """Relax a post-passage state on a window with Neumann edges until ``|u_t| <= tol``."""
    wsim, src = window_simulation(sim, window)
    st = StateGrid(u[:, src].copy(), 0.0)
    dt = wsim.dt
    max_steps = int(np.ceil(relax_time / dt))
    converged = False
    k = 0
    while k < max_steps:
        prev = st.u
        st = wsim.step(st)
        k += 1
        if k % check_every == 0 and np.abs(st.u - prev).max() <= tol * dt:
            converged = True
            break
    if not converged:
        raise EntireError(f"not-converged: max |u_t| still above {tol:g} after relax_time={relax_time}")
    res = residual_elliptic(st, wsim)
    R = 2.0 * sim.scen.obstacle.bound_radius + 2.0 if far_radius is None else far_radius
    far = np.hypot(wsim.xy[0], wsim.xy[1]) >= R
    dev = float(np.abs(1.0 - st.u[:, far]).max()) if far.any() else float("nan")
    flat = st.u.min(axis=0)
    j = int(np.argmin(flat))
    return LimitState(st.u, wsim, float(res["max"].max()), float(res["l2"].max()), dev, float(flat[j]),
                      wsim.xy[:, j].copy(), converged, k * dt, tol)
