"""Monotone explicit time stepping of ``u_t = D Δu + F(u)`` on a masked grid.

The Laplacian is assembled once as a sparse matrix over fluid cells.  Cells
next to the obstacle see ghost values interpolated at mirror points
(``mirror`` mode) or simply drop the missing flux (``zero_flux`` mode); both
keep non-negative off-diagonal weights, so forward Euler with
``dt (4 max D / h^2 + Lambda) <= 1`` preserves order between solutions.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import SolverError
from .front1d import FrontProfile
from .geometry import MaskedGrid, Obstacle, make_mask, no_obstacle
from .systems import SystemDef, audit_assumptions

SNAP_MAGIC = b"BOSNAP01"
DT_SAFETY = 0.9


@dataclass(frozen=True, eq=False)
class Scenario:
    system: SystemDef
    rect: tuple
    h: float
    obstacle: Obstacle = field(default_factory=no_obstacle)
    t_start: float = 0.0
    t_end: float = 10.0
    dt: Optional[float] = None
    init: dict = field(default_factory=lambda: {"kind": "front", "shift": 0.0})
    far_field: str = "front-pinned"  # or "neumann"
    snapshot_every: float = 1.0
    front: Optional[FrontProfile] = None
    neumann_mode: str = "mirror"  # or "zero_flux"
    imex: bool = False
    Lambda: Optional[float] = None
    label: str = "scenario"

    def replace(self, **kw) -> "Scenario":
        from dataclasses import replace

        return replace(self, **kw)


@dataclass
class StateGrid:
    u: np.ndarray  # (..., m, n_fluid)
    t: float


@dataclass
class Trajectory:
    sim: "Simulation"
    times: list
    states: list
    events: list
    stats: dict = field(default_factory=dict)

    def field(self, k: int) -> np.ndarray:
        return self.sim.to_grid(self.states[k])

    def __len__(self) -> int:
        return len(self.times)


def laplacian(grid: MaskedGrid, mode: str = "mirror") -> sp.csr_matrix:
    """Five-point Laplacian on fluid cells with Neumann conditions on the obstacle and the box."""
    if mode not in ("mirror", "zero_flux"):
        raise SolverError(f"unknown Neumann mode {mode!r}")
    ny, nx = grid.fluid.shape
    index = -np.ones((ny, nx), dtype=np.int64)
    fl = np.argwhere(grid.fluid)
    index[fl[:, 0], fl[:, 1]] = np.arange(len(fl))
    ghost_rows = {tuple(rc): k for k, rc in enumerate(grid.ghost_index)}
    inv_h2 = 1.0 / grid.h**2
    rows, cols, vals = [], [], []
    diag = np.zeros(len(fl))
    # fluid-fluid couplings, vectorised per direction
    for dr, dc in ((0, 1), (0, -1), (1, 0), (-1, 0)):
        r2, c2 = fl[:, 0] + dr, fl[:, 1] + dc
        inside = (r2 >= 0) & (r2 < ny) & (c2 >= 0) & (c2 < nx)
        k = np.nonzero(inside)[0]
        nb = index[r2[k], c2[k]]
        ok = nb >= 0
        rows.append(k[ok])
        cols.append(nb[ok])
        vals.append(np.full(ok.sum(), inv_h2))
        diag[k[ok]] -= inv_h2
        if mode == "mirror":
            for kk in k[~ok]:
                g = ghost_rows[(r2[kk], c2[kk])]
                for (j, i), w in grid.ghost_stencil[g]:
                    rows.append(np.array([kk]))
                    cols.append(np.array([index[j, i]]))
                    vals.append(np.array([w * inv_h2]))
                diag[kk] -= inv_h2
    rows.append(np.arange(len(fl)))
    cols.append(np.arange(len(fl)))
    vals.append(diag)
    n = len(fl)
    L = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))
    return L.tocsr()


class Simulation:
    """Compiled scenario: grid, operator, time step and far-field data."""

    def __init__(self, scen: Scenario, grid: Optional[MaskedGrid] = None):
        self.scen = scen
        sys = scen.system
        self.grid = grid if grid is not None else make_mask(scen.obstacle, scen.rect, scen.h)
        self.L = laplacian(self.grid, scen.neumann_mode)
        fl = np.argwhere(self.grid.fluid)
        self.cells = fl
        P = self.grid.mesh()
        self.xy = P[:, fl[:, 0], fl[:, 1]]
        if scen.Lambda is None:
            self.Lambda = audit_assumptions(sys, strict=False).ledger.Lambda
        else:
            self.Lambda = float(scen.Lambda)
        self.dt_max = 1.0 / (4.0 * sys.Dbar / scen.h**2 + self.Lambda)
        self.dt = DT_SAFETY * self.dt_max if scen.dt is None else float(scen.dt)
        if scen.dt is not None and self.dt > self.dt_max * (1 + 1e-12) and not scen.imex:
            raise SolverError(f"cfl-violation: dt={self.dt:.4g} exceeds the monotonicity bound {self.dt_max:.4g}")
        if scen.far_field not in ("front-pinned", "neumann"):
            raise SolverError(f"unknown far-field mode {scen.far_field!r}")
        self.pinned = np.zeros(len(fl), dtype=bool)
        if scen.far_field == "front-pinned":
            if scen.front is None:
                raise SolverError("front-pinned far field needs a front profile")
            self.pinned = (fl[:, 1] == 0) | (fl[:, 1] == self.grid.nx - 1)
        self._lu = None
        if scen.imex:
            self._lu = [splu((sp.identity(len(fl)) - self.dt * d * self.L).tocsc()) for d in sys.D]

    # -------------------------------------------------------------- helpers

    @property
    def m(self) -> int:
        return self.scen.system.m

    @property
    def n(self) -> int:
        return len(self.cells)

    def front_values(self, t: float, x: Optional[np.ndarray] = None) -> np.ndarray:
        prof = self.scen.front
        s0 = float(self.scen.init.get("shift", 0.0))
        x = self.xy[0] if x is None else x
        return prof(x + prof.c * t + s0)

    def initial_state(self) -> StateGrid:
        scen, init = self.scen, self.scen.init
        kind = init.get("kind", "front")
        if kind == "front":
            if scen.front is None:
                raise SolverError("front initial condition needs a front profile")
            u = self.front_values(scen.t_start)
        elif kind == "uniform":
            u = np.broadcast_to(np.asarray(init["value"], float)[:, None], (self.m, self.n)).copy()
        elif kind == "array":
            u = np.asarray(init["value"], float).copy()
        elif kind == "file":
            u = self.from_grid(read_snapshot(init["path"])["data"])
        else:
            raise SolverError(f"unknown initial condition kind {kind!r}")
        return StateGrid(u=np.clip(u, 0.0, 1.0), t=scen.t_start)

    def to_grid(self, u: np.ndarray) -> np.ndarray:
        out = np.full(u.shape[:-1] + self.grid.fluid.shape, np.nan)
        out[..., self.cells[:, 0], self.cells[:, 1]] = u
        return out

    def from_grid(self, arr: np.ndarray) -> np.ndarray:
        return np.asarray(arr)[..., self.cells[:, 0], self.cells[:, 1]]

    def apply_laplacian(self, u: np.ndarray) -> np.ndarray:
        flat = u.reshape(-1, self.n)
        if flat.shape[0] <= 8:
            return np.stack([self.L @ row for row in flat]).reshape(u.shape)
        return (self.L @ flat.T).T.reshape(u.shape)

    def rhs(self, u: np.ndarray) -> np.ndarray:
        sys = self.scen.system
        D = sys.D.reshape((sys.m, 1))
        return D * self.apply_laplacian(u) + self._field(u)

    def _field(self, u):
        sys = self.scen.system
        # F acts on the component axis, which sits just before the cell axis
        moved = np.moveaxis(u, -2, 0)
        return np.moveaxis(sys.F(moved), 0, -2)

    # ---------------------------------------------------------------- steps

    def step(self, state: StateGrid, record: Optional[dict] = None) -> StateGrid:
        u, dt = state.u, self.dt
        if self.scen.imex:
            rhs = u + dt * self._field(u)
            new = np.empty_like(u)
            flat_in = rhs.reshape(-1, self.m, self.n)
            flat_out = new.reshape(-1, self.m, self.n)
            for i, lu in enumerate(self._lu):
                flat_out[:, i, :] = lu.solve(np.ascontiguousarray(flat_in[:, i, :].T)).T
        else:
            new = u + dt * self.rhs(u)
        t = state.t + dt
        if not np.all(np.isfinite(new)):
            bad = np.argwhere(~np.isfinite(new))[0]
            cell = self.cells[bad[-1]]
            raise SolverError(f"nan-detected at cell row={cell[0]}, col={cell[1]}, t={t:.4g}")
        if record is not None:
            record["overshoot"] = max(record.get("overshoot", 0.0), float(max(-new.min(), new.max() - 1.0, 0.0)))
        np.clip(new, 0.0, 1.0, out=new)
        if self.pinned.any():
            new[..., self.pinned] = self.front_values(t, self.xy[0, self.pinned])
        return StateGrid(u=new, t=t)

    def events_row(self, state: StateGrid) -> dict:
        u = state.u
        row = {"t": state.t}
        for i in range(self.m):
            row[f"min_{i + 1}"] = float(u[i].min())
            row[f"max_{i + 1}"] = float(u[i].max())
            row[f"interface_x_{i + 1}"] = interface_abscissa(self, u[i])
        return row

    def run(self, t_end: Optional[float] = None, state: Optional[StateGrid] = None,
            snapshot_every: Optional[float] = None, out_dir: Optional[str] = None) -> Trajectory:
        scen = self.scen
        t_end = scen.t_end if t_end is None else t_end
        every = scen.snapshot_every if snapshot_every is None else snapshot_every
        state = self.initial_state() if state is None else state
        t0 = state.t
        n_steps = max(0, int(np.ceil((t_end - t0) / self.dt - 1e-9)))
        stride = max(1, int(round(every / self.dt)))
        times, states, events = [state.t], [state.u.copy()], [self.events_row(state)]
        record: dict = {}
        for k in range(1, n_steps + 1):
            state = self.step(state, record)
            if k % stride == 0 or k == n_steps:
                times.append(state.t)
                states.append(state.u.copy())
                events.append(self.events_row(state))
        traj = Trajectory(self, times, states, events, stats={"steps": n_steps, "dt": self.dt, **record})
        if out_dir is not None:
            write_trajectory(traj, out_dir)
        return traj


def step(state: StateGrid, sim: Simulation) -> StateGrid:
    return sim.step(state)


def run(scen: Scenario, out_dir: Optional[str] = None) -> Trajectory:
    return Simulation(scen).run(out_dir=out_dir)


def interface_abscissa(sim: Simulation, v: np.ndarray, level: float = 0.5) -> float:
    """Mean over grid rows of the left-most crossing of ``level``; NaN when no row crosses."""
    g = sim.to_grid(v)
    x = sim.grid.x
    xs = []
    for row in g:
        ok = np.isfinite(row[:-1]) & np.isfinite(row[1:])
        cross = np.nonzero(ok & ((row[:-1] - level) * (row[1:] - level) <= 0) & (row[:-1] != row[1:]))[0]
        if cross.size:
            k = cross[0]
            xs.append(x[k] + (level - row[k]) / (row[k + 1] - row[k]) * (x[k + 1] - x[k]))
    return float(np.mean(xs)) if xs else float("nan")


def residual_elliptic(state: StateGrid, sim: Simulation, mask: Optional[np.ndarray] = None) -> dict:
    """Max and L2 norms of ``D Δu + F(u)`` per component over (free) fluid cells."""
    r = sim.rhs(state.u)
    keep = ~sim.pinned if mask is None else (mask & ~sim.pinned)
    r = r[..., keep]
    h = sim.grid.h
    return {
        "max": np.abs(r).max(axis=-1),
        "l2": np.sqrt((r**2).sum(axis=-1) * h**2),
    }


# ------------------------------------------------------------------- I/O


def write_snapshot(path, sim: Simulation, state: StateGrid) -> None:
    g = sim.grid
    data = sim.to_grid(state.u)
    with open(path, "wb") as fh:
        fh.write(SNAP_MAGIC)
        fh.write(struct.pack("<3i4d", sim.m, g.nx, g.ny, g.h, state.t, g.x_lo, g.y_lo))
        fh.write(np.ascontiguousarray(data, dtype="<f8").tobytes())


def read_snapshot(path) -> dict:
    with open(path, "rb") as fh:
        if fh.read(len(SNAP_MAGIC)) != SNAP_MAGIC:
            raise SolverError(f"{path}: not a snapshot file")
        m, nx, ny, h, t, x_lo, y_lo = struct.unpack("<3i4d", fh.read(struct.calcsize("<3i4d")))
        data = np.frombuffer(fh.read(), dtype="<f8").reshape(m, ny, nx)
    return {"m": m, "nx": nx, "ny": ny, "h": h, "t": t, "x_lo": x_lo, "y_lo": y_lo, "data": data.copy()}


def write_trajectory(traj: Trajectory, out_dir) -> None:
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        for k, (t, u) in enumerate(zip(traj.times, traj.states)):
            write_snapshot(out / f"snap_{k:05d}.bin", traj.sim, StateGrid(u, t))
        keys = list(traj.events[0].keys())
        lines = [",".join(keys)] + [",".join(f"{row[k]:.12g}" for k in keys) for row in traj.events]
        (out / "events.csv").write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise SolverError(f"disk-write failure under {out}: {exc}") from exc
