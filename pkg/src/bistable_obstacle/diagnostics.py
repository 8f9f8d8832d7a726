"""Interfaces, geodesic distances, mean speed and propagation verdicts.

Interfaces are half-level contours of the first component.  Distances in the
exterior domain are geodesic: an 8-connected Dijkstra sweep over fluid cells
seeded from the contour vertices through a virtual source node.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import dijkstra
from skimage.measure import find_contours

from .errors import DiagnosticsError


@dataclass(frozen=True, eq=False)
class Interface:
    t: float
    polylines: list  # each (k, 2) array of (x, y)
    level: float

    @property
    def points(self) -> np.ndarray:
        return np.concatenate(self.polylines, axis=0) if self.polylines else np.zeros((0, 2))

    @property
    def mean_x(self) -> float:
        """Arc-length weighted mean abscissa."""
        num = den = 0.0
        for line in self.polylines:
            seg = np.linalg.norm(np.diff(line, axis=0), axis=1)
            mid = 0.5 * (line[1:, 0] + line[:-1, 0])
            num += float((seg * mid).sum())
            den += float(seg.sum())
        if den == 0.0:
            return float(self.points[:, 0].mean())
        return num / den

    @property
    def length(self) -> float:
        return float(sum(np.linalg.norm(np.diff(line, axis=0), axis=1).sum() for line in self.polylines))


@dataclass(frozen=True)
class SpeedEstimate:
    gamma: float
    stderr: float
    pairs: np.ndarray  # columns |t-s|, d
    max_gap: float

    @property
    def band(self) -> tuple:
        return (self.gamma - 2 * self.stderr, self.gamma + 2 * self.stderr)


def interface_set(sim, u: np.ndarray, t: float = 0.0, level: float = 0.5, component: int = 0) -> Interface:
    """Level contour of one component, restricted to fluid cells."""
    if not 0.0 < level < 1.0:
        raise DiagnosticsError("level must lie in (0, 1)")
    g = sim.to_grid(u)[component]
    fluid = sim.grid.fluid
    arr = np.where(fluid, g, 0.0)
    lines = find_contours(arr, level, mask=fluid)
    out = []
    gr = sim.grid
    for ln in lines:
        if len(ln) < 2:
            continue
        xy = np.column_stack([gr.x_lo + (ln[:, 1] + 0.5) * gr.h, gr.y_lo + (ln[:, 0] + 0.5) * gr.h])
        out.append(xy)
    if not out:
        raise DiagnosticsError(f"empty-interface at t={t:.4g}: no {level}-level in the fluid region")
    return Interface(t=t, polylines=out, level=level)


# ----------------------------------------------------------------- geodesics


class GeodesicGraph:
    """8-connected fluid-cell graph with one extra virtual source node."""

    def __init__(self, grid):
        self.grid = grid
        ny, nx = grid.fluid.shape
        idx = -np.ones((ny, nx), dtype=np.int64)
        cells = np.argwhere(grid.fluid)
        idx[cells[:, 0], cells[:, 1]] = np.arange(len(cells))
        self.index, self.cells, self.n = idx, cells, len(cells)
        rows, cols, w = [], [], []
        h = grid.h
        for dr, dc in ((0, 1), (1, 0), (1, 1), (1, -1)):
            r2, c2 = cells[:, 0] + dr, cells[:, 1] + dc
            ok = (r2 >= 0) & (r2 < ny) & (c2 >= 0) & (c2 < nx)
            a = np.nonzero(ok)[0]
            b = idx[r2[a], c2[a]]
            good = b >= 0
            if dr and dc:
                # no corner cutting through the obstacle
                good &= grid.fluid[cells[a, 0] + dr, cells[a, 1]] & grid.fluid[cells[a, 0], cells[a, 1] + dc]
            rows.append(a[good])
            cols.append(b[good])
            w.append(np.full(good.sum(), h * (np.sqrt(2.0) if dr and dc else 1.0)))
        self._rows, self._cols, self._w = np.concatenate(rows), np.concatenate(cols), np.concatenate(w)
        self.xy = np.stack([grid.x_lo + (cells[:, 1] + 0.5) * h, grid.y_lo + (cells[:, 0] + 0.5) * h])

    def distance_from(self, pts: np.ndarray) -> np.ndarray:
        """Geodesic distance from the point set to every fluid cell."""
        g = self.grid
        h = g.h
        col = np.clip(np.floor((pts[:, 0] - g.x_lo) / h - 0.5).astype(int), 0, g.nx - 1)
        row = np.clip(np.floor((pts[:, 1] - g.y_lo) / h - 0.5).astype(int), 0, g.ny - 1)
        seeds, dists = [], []
        for dr in (0, 1):
            for dc in (0, 1):
                r = np.clip(row + dr, 0, g.ny - 1)
                c = np.clip(col + dc, 0, g.nx - 1)
                k = self.index[r, c]
                ok = k >= 0
                seeds.append(k[ok])
                dists.append(np.hypot(self.xy[0, k[ok]] - pts[ok, 0], self.xy[1, k[ok]] - pts[ok, 1]))
        seeds, dists = np.concatenate(seeds), np.concatenate(dists)
        if seeds.size == 0:
            raise DiagnosticsError("interface points have no fluid neighbours")
        src = self.n
        rows = np.concatenate([self._rows, np.full(seeds.size, src)])
        cols = np.concatenate([self._cols, seeds])
        w = np.concatenate([self._w, np.maximum(dists, 1e-12)])
        G = sp.coo_matrix((w, (rows, cols)), shape=(self.n + 1, self.n + 1)).tocsr()
        d = dijkstra(G, directed=False, indices=src)
        return d[: self.n]

    def sample(self, field: np.ndarray, pts: np.ndarray) -> np.ndarray:
        """Cell field at arbitrary points: value of the nearest fluid cell."""
        g = self.grid
        col = np.clip(np.round((pts[:, 0] - g.x_lo) / g.h - 0.5).astype(int), 0, g.nx - 1)
        row = np.clip(np.round((pts[:, 1] - g.y_lo) / g.h - 0.5).astype(int), 0, g.ny - 1)
        k = self.index[row, col]
        out = np.full(len(pts), np.nan)
        ok = k >= 0
        out[ok] = field[k[ok]]
        if not ok.all():
            # fall back to the closest fluid cell for points hugging the obstacle
            bad = np.nonzero(~ok)[0]
            for b in bad:
                j = np.argmin(np.hypot(self.xy[0] - pts[b, 0], self.xy[1] - pts[b, 1]))
                out[b] = field[j]
        return out


def _graph(sim) -> GeodesicGraph:
    g = getattr(sim, "_geodesic", None)
    if g is None:
        g = GeodesicGraph(sim.grid)
        sim._geodesic = g
    return g


def interface_distance(sim, a: Interface, b: Interface, mode: str = "hausdorff", dist_a=None) -> float:
    """Geodesic distance between two interfaces (``hausdorff`` or ``inf``)."""
    G = _graph(sim)
    da = G.distance_from(a.points) if dist_a is None else dist_a
    ab = G.sample(da, b.points)
    if mode == "inf":
        return float(np.min(ab))
    db = G.distance_from(b.points)
    ba = G.sample(db, a.points)
    return float(max(ab.max(), ba.max()))


def global_mean_speed(traj, level: float = 0.5, split_time: Optional[float] = None, mode: str = "hausdorff",
                      min_fraction: float = 0.5) -> SpeedEstimate:
    """Least-squares slope of interface distance against elapsed time over long pairs."""
    sim = traj.sim
    ifs = []
    for t, u in zip(traj.times, traj.states):
        try:
            ifs.append(interface_set(sim, u, t, level))
        except DiagnosticsError:
            continue
    if len(ifs) < 10:
        raise DiagnosticsError(f"insufficient-interfaces: {len(ifs)} snapshots with an interface, need 10")
    span = ifs[-1].t - ifs[0].t
    G = _graph(sim)
    fields = [G.distance_from(I.points) for I in ifs]
    rows = []
    for i, I in enumerate(ifs):
        for j in range(i + 1, len(ifs)):
            J = ifs[j]
            gap = J.t - I.t
            if gap < min_fraction * span:
                continue
            if split_time is not None and not (I.t < split_time <= J.t):
                continue
            ab = G.sample(fields[i], J.points)
            if mode == "inf":
                d = float(ab.min())
            else:
                d = float(max(ab.max(), G.sample(fields[j], I.points).max()))
            rows.append((gap, d))
    if len(rows) < 2:
        raise DiagnosticsError("insufficient-interfaces: fewer than two admissible pairs")
    P = np.array(rows)
    A = np.column_stack([P[:, 0], np.ones(len(P))])
    coef, *_ = np.linalg.lstsq(A, P[:, 1], rcond=None)
    resid = P[:, 1] - A @ coef
    dof = max(len(P) - 2, 1)
    cov = np.linalg.pinv(A.T @ A) * (resid @ resid) / dof
    gamma = max(float(coef[0]), 0.0)
    return SpeedEstimate(gamma=gamma, stderr=float(np.sqrt(max(cov[0, 0], 0.0))), pairs=P, max_gap=float(P[:, 0].max()))


def transition_front_width(traj, eps: float, level: float = 0.5) -> dict:
    """Finite-time width certificate: max over snapshots of the smallest admissible ``M``."""
    if not 0.0 < eps < 0.5:
        raise DiagnosticsError("eps must lie in (0, 1/2)")
    sim = traj.sim
    G = _graph(sim)
    widths, worst = [], None
    diam = np.hypot(sim.grid.x_hi - sim.grid.x_lo, sim.grid.y_hi - sim.grid.y_lo)
    for t, u in zip(traj.times, traj.states):
        I = interface_set(sim, u, t, level)
        d = G.distance_from(I.points)
        behind = u[0] >= level
        bad_hi = behind & (u.min(axis=0) < 1.0 - eps)
        bad_lo = ~behind & (u.max(axis=0) > eps)
        M = 0.0
        for bad in (bad_hi, bad_lo):
            if bad.any():
                k = np.argmax(np.where(bad, d, -np.inf))
                if d[k] > M:
                    M = float(d[k])
                    worst = (t, sim.xy[:, k].copy())
        if M > 0.5 * diam:
            raise DiagnosticsError(f"never-satisfied at t={t:.4g}: dichotomy violated at {worst[1]} (M={M:.3g})")
        widths.append((t, M))
    W = np.array(widths)
    return {"M_eps": float(W[:, 1].max()), "per_snapshot": W, "worst": worst}


# --------------------------------------------------------------- verdicts


@dataclass(frozen=True)
class Verdict:
    kind: str  # complete | blocked | undecided
    min_value: float
    location: Optional[np.ndarray] = None
    residual: float = float("nan")

    def __str__(self) -> str:
        if self.kind == "blocked":
            return f"blocked({self.min_value:.4g}, {self.location})"
        return self.kind


def classify_propagation(limit, thr_hi: float = 1e-3, thr_lo: float = 0.5, residual_tol: float = 1e-4) -> Verdict:
    """complete / blocked / undecided from a (converged) limit state."""
    converged = bool(limit.converged) and limit.residual <= residual_tol
    if not converged:
        return Verdict("undecided", limit.min_value, limit.min_location, limit.residual)
    if limit.min_value >= 1.0 - thr_hi:
        return Verdict("complete", limit.min_value, limit.min_location, limit.residual)
    if limit.min_value <= thr_lo:
        return Verdict("blocked", limit.min_value, limit.min_location, limit.residual)
    return Verdict("undecided", limit.min_value, limit.min_location, limit.residual)


def write_csv(path, header, rows) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for r in rows:
            fh.write(",".join(f"{v:.12g}" if isinstance(v, (float, np.floating)) else str(v) for v in r) + "\n")
