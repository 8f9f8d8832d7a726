"""Obstacles, shape predicates, masked grids and the boundary-flux function.

An obstacle ``K`` is described by an implicit function ``phi`` that is negative
inside ``K``, positive in the exterior domain and close to a signed distance
near the boundary.  Points are passed as arrays of shape ``(2, ...)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import ndimage
from scipy.optimize import brentq

from .errors import GeometryError
from .systems import smoothstep, smoothstep_d1, smoothstep_d2

ImplicitFn = Callable[[np.ndarray], np.ndarray]
_FD = 1e-5


@dataclass(frozen=True, eq=False)
class Obstacle:
    phi_fn: Optional[ImplicitFn]
    bound_radius: float
    center: np.ndarray = field(default_factory=lambda: np.zeros(2))
    inner_radius: float = 0.0
    label: str = "obstacle"
    grad_fn: Optional[ImplicitFn] = None
    lap_fn: Optional[ImplicitFn] = None
    params: dict = field(default_factory=dict)

    @property
    def empty(self) -> bool:
        return self.phi_fn is None

    @property
    def tol_geo(self) -> float:
        return 1e-6 * max(self.bound_radius, 1.0)

    def phi(self, P) -> np.ndarray:
        P = np.asarray(P, dtype=float)
        if self.empty:
            return np.full(P.shape[1:], np.inf)
        return self.phi_fn(P)

    def grad(self, P) -> np.ndarray:
        P = np.asarray(P, dtype=float)
        if self.empty:
            return np.zeros_like(P)
        if self.grad_fn is not None:
            return self.grad_fn(P)
        out = np.empty_like(P)
        for k in range(2):
            e = np.zeros((2,) + (1,) * (P.ndim - 1))
            e[k] = _FD
            out[k] = (self.phi_fn(P + e) - self.phi_fn(P - e)) / (2 * _FD)
        return out

    def lap(self, P) -> np.ndarray:
        P = np.asarray(P, dtype=float)
        if self.empty:
            return np.zeros(P.shape[1:])
        if self.lap_fn is not None:
            return self.lap_fn(P)
        step = 1e-3
        out = -4.0 * self.phi_fn(P)
        for k in range(2):
            e = np.zeros((2,) + (1,) * (P.ndim - 1))
            e[k] = step
            out = out + self.phi_fn(P + e) + self.phi_fn(P - e)
        return out / step**2

    def normal(self, P) -> np.ndarray:
        """Unit normal pointing out of ``K`` (into the exterior domain)."""
        g = self.grad(P)
        return g / np.maximum(np.linalg.norm(g, axis=0), 1e-300)

    def validate(self, n: int = 720) -> None:
        if self.empty:
            return
        th = np.linspace(0, 2 * np.pi, n, endpoint=False)
        ring = 1.001 * self.bound_radius * np.stack([np.cos(th), np.sin(th)])
        if np.any(self.phi(ring) <= 0):
            raise GeometryError(f"{self.label}: K is not contained in B(0, {self.bound_radius})")
        if self.inner_radius > 0:
            r = np.linspace(0, 0.999 * self.inner_radius, 20)
            disk = self.center[:, None, None] + r[None, :, None] * np.stack([np.cos(th), np.sin(th)])[:, None, :]
            if np.any(self.phi(disk) >= 0):
                raise GeometryError(f"{self.label}: inner ball B({self.center}, {self.inner_radius}) not inside K")


# ------------------------------------------------------------------ shapes


def no_obstacle() -> Obstacle:
    return Obstacle(phi_fn=None, bound_radius=0.0, label="none")


def disk(r: float = 1.0, center=(0.0, 0.0)) -> Obstacle:
    c = np.asarray(center, float)

    def rho(P):
        return np.hypot(P[0] - c[0], P[1] - c[1])

    def phi(P):
        return rho(P) - r

    def grad(P):
        q = np.maximum(rho(P), 1e-300)
        return np.stack([(P[0] - c[0]) / q, (P[1] - c[1]) / q])

    def lap(P):
        return 1.0 / np.maximum(rho(P), 1e-300)

    return Obstacle(phi, bound_radius=float(np.hypot(*c) + r), center=c, inner_radius=r,
                    label=f"disk(r={r})", grad_fn=grad, lap_fn=lap, params={"r": r})


def ellipse(a: float = 2.0, b: float = 1.0) -> Obstacle:
    def phi(P):
        f = (P[0] / a) ** 2 + (P[1] / b) ** 2 - 1.0
        g = 2.0 * np.hypot(P[0] / a**2, P[1] / b**2)
        return f / np.maximum(g, 1e-12)

    return Obstacle(phi, bound_radius=max(a, b), inner_radius=min(a, b), label=f"ellipse(a={a}, b={b})",
                    params={"a": a, "b": b})


def rectangle(w: float = 4.0, h: float = 2.0) -> Obstacle:
    """Axis-aligned box with full widths ``w`` by ``h`` centred at the origin."""
    half = np.array([w / 2.0, h / 2.0])

    def phi(P):
        qx, qy = np.abs(P[0]) - half[0], np.abs(P[1]) - half[1]
        outside = np.hypot(np.maximum(qx, 0.0), np.maximum(qy, 0.0))
        return outside + np.minimum(np.maximum(qx, qy), 0.0)

    return Obstacle(phi, bound_radius=float(np.hypot(*half)), inner_radius=float(half.min()),
                    label=f"rectangle(w={w}, h={h})", params={"w": w, "h": h})


def annulus_channel(r_in: float = 2.0, r_out: float = 3.0, slit: float = 0.1) -> Obstacle:
    """Ring ``r_in <= |x| <= r_out`` cut by a channel ``|y| < slit`` on the +x side."""
    if not 0 < r_in < r_out:
        raise GeometryError("annulus needs 0 < r_in < r_out")

    def phi(P):
        rho = np.hypot(P[0], P[1])
        ring = np.maximum(r_in - rho, rho - r_out)
        return np.maximum(ring, np.minimum(slit - np.abs(P[1]), P[0]))

    mid = 0.5 * (r_in + r_out)
    return Obstacle(phi, bound_radius=r_out, center=np.array([-mid, 0.0]), inner_radius=0.5 * (r_out - r_in),
                    label=f"annulus_channel(r_in={r_in}, r_out={r_out}, slit={slit})",
                    params={"r_in": r_in, "r_out": r_out, "slit": slit})


def crescent(r: float = 1.0, r_cut: float = 0.8, offset: float = 1.2) -> Obstacle:
    """Disk of radius ``r`` with a disk of radius ``r_cut`` at ``(offset, 0)`` removed."""

    def phi(P):
        return np.maximum(np.hypot(P[0], P[1]) - r, r_cut - np.hypot(P[0] - offset, P[1]))

    inner = 0.5 * (r + offset - r_cut)
    return Obstacle(phi, bound_radius=r, center=np.array([-(r - inner), 0.0]), inner_radius=inner,
                    label=f"crescent(r={r}, r_cut={r_cut}, offset={offset})",
                    params={"r": r, "r_cut": r_cut, "offset": offset})


def polynomial_obstacle(coeffs: dict, bound_radius: float, label: str = "polynomial") -> Obstacle:
    """Implicit ``f(x, y) = sum c_ij x^i y^j`` normalised by ``|grad f|``."""
    terms = [(int(i), int(j), float(c)) for (i, j), c in coeffs.items()]

    def f(P):
        return sum(c * P[0] ** i * P[1] ** j for i, j, c in terms)

    def df(P):
        gx = sum(c * i * P[0] ** max(i - 1, 0) * P[1] ** j for i, j, c in terms if i)
        gy = sum(c * j * P[0] ** i * P[1] ** max(j - 1, 0) for i, j, c in terms if j)
        return np.hypot(gx, gy)

    def phi(P):
        return f(P) / np.maximum(df(P), 1e-12)

    obs = Obstacle(phi, bound_radius=float(bound_radius), label=label, params={"coeffs": coeffs})
    return recentered(obs)


def chebyshev_center(obs: Obstacle, n: int = 201):
    """Sampled point deepest inside ``K`` and its depth."""
    R = obs.bound_radius
    g = np.linspace(-R, R, n)
    X, Y = np.meshgrid(g, g, indexing="xy")
    val = obs.phi(np.stack([X, Y]))
    k = np.unravel_index(np.argmin(val), val.shape)
    return np.array([X[k], Y[k]]), float(-val[k])


def recentered(obs: Obstacle) -> Obstacle:
    """Place the reference ball at the Chebyshev centre when it does not fit around the current centre."""
    if obs.empty:
        return obs
    c, depth = chebyshev_center(obs)
    if depth <= 0:
        raise GeometryError(f"{obs.label}: implicit function has no interior")
    cur = -float(obs.phi(obs.center[:, None])[0])
    if cur >= obs.inner_radius > 0:
        return obs
    return Obstacle(obs.phi_fn, obs.bound_radius, center=c, inner_radius=0.95 * depth, label=obs.label,
                    grad_fn=obs.grad_fn, lap_fn=obs.lap_fn, params=obs.params)


# -------------------------------------------------------------- predicates


@dataclass(frozen=True)
class Verdict:
    value: Optional[bool]  # None means inconclusive
    witness: Optional[np.ndarray] = None
    note: str = ""

    def __bool__(self) -> bool:
        return bool(self.value)


def _ray_crossings(obs: Obstacle, origin, direction, t_max, n=2000):
    t = np.linspace(0.0, t_max, n)
    P = origin[:, None] + direction[:, None] * t[None, :]
    v = obs.phi(P)
    idx = np.nonzero(np.sign(v[:-1]) != np.sign(v[1:]))[0]
    out = []
    for k in idx:
        f = lambda s: float(obs.phi((origin + s * direction)[:, None])[0])
        out.append(brentq(f, t[k], t[k + 1], xtol=1e-13))
    return out


def is_star_shaped(obs: Obstacle, center, n_samples: int = 360) -> Verdict:
    """Sampled check that every boundary point sees ``center`` from inside ``K``."""
    x = np.asarray(center, dtype=float)
    if obs.empty or obs.phi(x[:, None])[0] >= 0:
        raise GeometryError(f"center-outside: {x} is not in the interior of {obs.label}")
    tol = obs.tol_geo
    t_max = 1.05 * (obs.bound_radius + np.linalg.norm(x))
    for th in np.linspace(0, 2 * np.pi, n_samples, endpoint=False):
        e = np.array([np.cos(th), np.sin(th)])
        ts = _ray_crossings(obs, x, e, t_max)
        for t in ts:
            y = x + t * e
            nu = obs.normal(y[:, None])[:, 0]
            if nu @ (y - x) < -tol:
                return Verdict(False, y, "normal faces the centre")
        if len(ts) != 1:
            return Verdict(False, x + ts[1] * e if len(ts) > 1 else x, "ray leaves K more than once")
    return Verdict(True)


def is_directionally_convex(obs: Obstacle, e_tilde, l: float = 0.0, n_lines: int = 201) -> Verdict:
    """Line scan parallel to ``e_tilde`` plus comparison of the section at offset ``l`` with the shadow."""
    e = np.asarray(e_tilde, dtype=float)
    if abs(np.linalg.norm(e) - 1.0) > 1e-12:
        raise GeometryError("e_tilde must be a unit vector")
    if obs.empty:
        return Verdict(None, note="empty obstacle")
    perp = np.array([-e[1], e[0]])
    R = 1.05 * obs.bound_radius
    tol = obs.tol_geo
    t = np.linspace(-R, R, 4001)
    ambiguous = 0
    shadow_mismatch = None
    hits = 0
    for s in np.linspace(-R, R, n_lines):
        P = s * perp[:, None] + e[:, None] * t[None, :]
        v = obs.phi(P)
        if np.min(np.abs(v)) < tol:
            ambiguous += 1
            continue
        changes = int(np.count_nonzero(np.sign(v[:-1]) != np.sign(v[1:])))
        if changes > 2:
            k = np.nonzero(np.sign(v[:-1]) != np.sign(v[1:]))[0][2]
            return Verdict(False, P[:, k], f"line meets K in {changes // 2} segments")
        if changes:
            hits += 1
            on_plane = obs.phi((s * perp + l * e)[:, None])[0] < 0
            if not on_plane and shadow_mismatch is None:
                shadow_mismatch = s * perp + l * e
    if hits == 0:
        return Verdict(None, note="no sampled line meets K")
    if shadow_mismatch is not None:
        return Verdict(False, shadow_mismatch, "section differs from the projection of K")
    if ambiguous > n_lines // 2:
        return Verdict(None, note="too many tangent lines")
    return Verdict(True)


# ------------------------------------------------------------- masked grid


@dataclass(frozen=True, eq=False)
class MaskedGrid:
    x_lo: float
    x_hi: float
    y_lo: float
    y_hi: float
    h: float
    nx: int
    ny: int
    fluid: np.ndarray  # (ny, nx) bool
    boundary: np.ndarray  # fluid cells with a 4-neighbour in K
    ghost: np.ndarray  # obstacle cells with a fluid 4-neighbour
    ghost_index: np.ndarray  # (G, 2) row/col
    ghost_normal: np.ndarray  # (G, 2)
    ghost_mirror: np.ndarray  # (G, 2) coordinates
    ghost_stencil: list  # per ghost: list of ((row, col), weight)
    obstacle: Obstacle

    @property
    def x(self) -> np.ndarray:
        return self.x_lo + (np.arange(self.nx) + 0.5) * self.h

    @property
    def y(self) -> np.ndarray:
        return self.y_lo + (np.arange(self.ny) + 0.5) * self.h

    def mesh(self) -> np.ndarray:
        X, Y = np.meshgrid(self.x, self.y, indexing="xy")
        return np.stack([X, Y])

    @property
    def n_fluid(self) -> int:
        return int(self.fluid.sum())

    def fluid_area(self) -> float:
        return self.n_fluid * self.h**2

    def to_rle(self) -> str:
        """Run-length rows: ``F`` fluid, ``B`` boundary layer, ``K`` obstacle."""
        code = np.where(self.fluid, np.where(self.boundary, "B", "F"), "K")
        lines = [f"# nx={self.nx} ny={self.ny} h={self.h} x_lo={self.x_lo} y_lo={self.y_lo}"]
        for row in code:
            runs, prev, count = [], row[0], 0
            for ch in row:
                if ch == prev:
                    count += 1
                else:
                    runs.append(f"{count}{prev}")
                    prev, count = ch, 1
            runs.append(f"{count}{prev}")
            lines.append(" ".join(runs))
        return "\n".join(lines) + "\n"


def _neighbours4(mask):
    out = np.zeros_like(mask)
    out[1:, :] |= mask[:-1, :]
    out[:-1, :] |= mask[1:, :]
    out[:, 1:] |= mask[:, :-1]
    out[:, :-1] |= mask[:, 1:]
    return out


def make_mask(obs: Obstacle, rect, h: float) -> MaskedGrid:
    """Cell-centred grid on ``rect`` with the obstacle carved out."""
    x_lo, x_hi, y_lo, y_hi = map(float, rect)
    if h <= 0:
        raise GeometryError("grid spacing must be positive")
    nx, ny = int(round((x_hi - x_lo) / h)), int(round((y_hi - y_lo) / h))
    if abs(nx * h - (x_hi - x_lo)) > 1e-9 * nx or abs(ny * h - (y_hi - y_lo)) > 1e-9 * ny:
        raise GeometryError(f"rectangle {rect} is not a whole number of cells of size {h}")
    R = obs.bound_radius
    if not obs.empty and not (x_lo < -R and x_hi > R and y_lo < -R and y_hi > R):
        raise GeometryError(f"rectangle {rect} does not strictly contain the ball of radius {R}")
    xs = x_lo + (np.arange(nx) + 0.5) * h
    ys = y_lo + (np.arange(ny) + 0.5) * h
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    P = np.stack([X, Y])
    fluid = obs.phi(P) > 0
    labels, count = ndimage.label(fluid)
    if count != 1:
        raise GeometryError(f"disconnected-fluid: exterior splits into {count} components at h={h}")
    solid = ~fluid
    boundary = fluid & _neighbours4(solid)
    ghost = solid & _neighbours4(fluid)
    gidx = np.argwhere(ghost)
    normals, mirrors, stencils = [], [], []
    for r, c in gidx:
        p = P[:, r, c]
        nu = obs.normal(p[:, None])[:, 0]
        d = max(-float(obs.phi(p[:, None])[0]), 0.0)
        mirror = p + (d + max(d, h)) * nu
        normals.append(nu)
        mirrors.append(mirror)
        stencils.append(_bilinear_fluid(mirror, x_lo, y_lo, h, nx, ny, fluid, (r, c)))
    return MaskedGrid(
        x_lo, x_hi, y_lo, y_hi, h, nx, ny, fluid, boundary, ghost,
        gidx.reshape(-1, 2), np.array(normals).reshape(-1, 2), np.array(mirrors).reshape(-1, 2), stencils, obs,
    )


def _bilinear_fluid(pt, x_lo, y_lo, h, nx, ny, fluid, ghost_rc):
    """Bilinear weights at ``pt`` renormalised over fluid corners; nearest fluid neighbour as fallback."""
    fx = (pt[0] - x_lo) / h - 0.5
    fy = (pt[1] - y_lo) / h - 0.5
    i0, j0 = int(np.floor(fx)), int(np.floor(fy))
    ax, ay = fx - i0, fy - j0
    corners = []
    for dj, wy in ((0, 1 - ay), (1, ay)):
        for di, wx in ((0, 1 - ax), (1, ax)):
            j, i = j0 + dj, i0 + di
            w = wx * wy
            if 0 <= j < ny and 0 <= i < nx and fluid[j, i] and w > 1e-14:
                corners.append(((j, i), w))
    total = sum(w for _, w in corners)
    if total > 1e-3:
        return [(rc, w / total) for rc, w in corners]
    r, c = ghost_rc
    best = None
    for dr, dc in ((0, 1), (0, -1), (1, 0), (-1, 0)):
        j, i = r + dr, c + dc
        if 0 <= j < ny and 0 <= i < nx and fluid[j, i]:
            dist = np.hypot(x_lo + (i + 0.5) * h - pt[0], y_lo + (j + 0.5) * h - pt[1])
            if best is None or dist < best[0]:
                best = (dist, (j, i))
    return [(best[1], 1.0)]


# ------------------------------------------------------------------- zeta


@dataclass(frozen=True, eq=False)
class ZetaField:
    """``zeta = g(phi) + Chat`` with ``g(s) = -s`` in a collar and zero far away."""

    obstacle: Obstacle
    collar: float
    Chat: float
    grid_values: np.ndarray
    grid_lap_ratio: float
    normal_derivative: np.ndarray
    bound: float

    @property
    def support_radius(self) -> float:
        return self.obstacle.bound_radius + 2.0 * self.collar

    def _g(self, s, order=0):
        w = self.collar
        z = (s - w) / w
        cut = 1.0 - smoothstep(z)
        dcut = -smoothstep_d1(z) / w
        ddcut = -smoothstep_d2(z) / w**2
        if order == 0:
            return -s * cut
        if order == 1:
            return -cut - s * dcut
        return -2.0 * dcut - s * ddcut

    def value(self, P) -> np.ndarray:
        if self.obstacle.empty:
            return np.ones(np.shape(P)[1:])
        return self._g(self.obstacle.phi(P)) + self.Chat

    def grad(self, P) -> np.ndarray:
        if self.obstacle.empty:
            return np.zeros(np.shape(P))
        return self._g(self.obstacle.phi(P), 1) * self.obstacle.grad(P)

    def lap(self, P) -> np.ndarray:
        if self.obstacle.empty:
            return np.zeros(np.shape(P)[1:])
        s = self.obstacle.phi(P)
        g = self.obstacle.grad(P)
        return self._g(s, 2) * np.sum(g * g, axis=0) + self._g(s, 1) * self.obstacle.lap(P)

    def norms(self, grid: Optional[MaskedGrid] = None) -> dict:
        """Sup norms of zeta, grad zeta and Laplacian over the collar and the grid."""
        if self.obstacle.empty:
            return {"zeta": 1.0, "grad": 0.0, "lap": 0.0}
        P = _collar_samples(self.obstacle, self.collar)
        vals = [np.abs(self.value(P)).max(), np.linalg.norm(self.grad(P), axis=0).max(), np.abs(self.lap(P)).max()]
        if grid is not None:
            Q = grid.mesh()[:, grid.fluid]
            vals = [max(vals[0], np.abs(self.value(Q)).max()),
                    max(vals[1], np.linalg.norm(self.grad(Q), axis=0).max()),
                    max(vals[2], np.abs(self.lap(Q)).max())]
        return {"zeta": float(vals[0]), "grad": float(vals[1]), "lap": float(vals[2])}


def _collar_samples(obs: Obstacle, collar: float, n_th: int = 720, n_s: int = 80) -> np.ndarray:
    """Points in the exterior band ``0 < phi < 2 collar`` found along rays from the centre."""
    th = np.linspace(0, 2 * np.pi, n_th, endpoint=False)
    rmax = obs.bound_radius + 2.5 * collar + np.linalg.norm(obs.center)
    r = np.linspace(0, rmax, 4 * n_s)
    P = obs.center[:, None, None] + r[None, :, None] * np.stack([np.cos(th), np.sin(th)])[:, None, :]
    P = P.reshape(2, -1)
    v = obs.phi(P)
    return P[:, (v > 0) & (v < 2 * collar)]


def build_zeta(obs: Obstacle, grid: MaskedGrid, eta: float, Dbar: float, collar: Optional[float] = None,
               max_lift: float = 1e8) -> ZetaField:
    """Positive function with unit outward flux on the obstacle and ``|lap zeta / zeta| <= eta / Dbar``."""
    k = eta / Dbar
    if k <= 0:
        raise GeometryError("eta / Dbar must be positive")
    if obs.empty:
        return ZetaField(obs, 0.0, 1.0, np.where(grid.fluid, 1.0, np.nan), 0.0, np.zeros(0), k)
    w0 = max(4.0 * grid.h, 0.2 * obs.inner_radius)
    Pg = grid.mesh()[:, grid.fluid]
    # widen the collar geometrically and keep the width needing the smallest lift
    ladder = [w0 * 2.0**j for j in range(7)] if collar is None else [float(collar)]
    span = min(grid.x_hi - grid.x_lo, grid.y_hi - grid.y_lo)
    ladder = [c for c in ladder if c <= span] or ladder[:1]
    best = None
    for w in ladder:
        trial = ZetaField(obs, w, 0.0, None, 0.0, None, k)
        P = np.concatenate([Pg, _collar_samples(obs, w)], axis=1)
        gt, lt = trial.value(P), np.abs(trial.lap(P))
        # smallest lift giving zeta > 1 and |lap| <= k zeta at every sample
        lift = max(1.0 - gt.min(), float(np.max(lt / k - gt)))
        if best is None or lift < best[1]:
            best = (w, lift)
    w, lift = best
    Chat = lift * (1.0 + 1e-6) + 1e-9
    if not np.isfinite(Chat) or Chat > max_lift:
        raise GeometryError(f"bound-unreachable: required lift {Chat:.3e} for |lap zeta/zeta| <= {k}")
    z = ZetaField(obs, w, Chat, None, 0.0, None, k)
    vals = np.full(grid.fluid.shape, np.nan)
    vals[grid.fluid] = z.value(Pg)
    ratio = float(np.max(np.abs(z.lap(Pg)) / z.value(Pg)))
    # one-sided flux through each ghost/mirror pair, oriented out of the exterior domain
    if len(grid.ghost_index):
        G = grid.mesh()[:, grid.ghost_index[:, 0], grid.ghost_index[:, 1]]
        M = grid.ghost_mirror.T
        dist = np.linalg.norm(G - M, axis=0)
        flux = (z.value(G) - z.value(M)) / dist
    else:
        flux = np.zeros(0)
    z = ZetaField(obs, w, Chat, vals, ratio, flux, k)
    if vals[grid.fluid].min() <= 1.0 or ratio > k * (1 + 1e-9):
        raise GeometryError(f"bound-unreachable: zeta postcondition failed (ratio {ratio:.3e} vs {k:.3e})")
    return z
