"""Planar bistable fronts and the half-line ground state.

The front ``Phi`` solves ``D Phi'' - c Phi' + F(Phi) = 0`` with ``Phi(-inf) = 0``
and ``Phi(+inf) = 1``.  It is computed on ``[-Xi, Xi]`` by a freezing
iteration (parabolic flow in a co-moving frame whose speed is corrected from
the drift of the half level of the first component) and then polished by a
sparse Newton solve on ``(Phi, c)``.
"""
from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.interpolate import BPoly
from scipy.linalg import solve_banded
from scipy.sparse.linalg import spsolve

from .errors import FrontError
from .systems import SystemDef, audit_assumptions, jacobian


# ------------------------------------------------------------------ profile


@dataclass(frozen=True, eq=False)
class FrontProfile:
    xi: np.ndarray
    values: np.ndarray  # (m, n)
    deriv: np.ndarray
    deriv2: np.ndarray
    c: float
    D: np.ndarray
    residual: float = float("nan")
    meta: dict = field(default_factory=dict)

    @property
    def m(self) -> int:
        return self.values.shape[0]

    @property
    def h(self) -> float:
        return float(self.xi[1] - self.xi[0])

    @property
    def half_width(self) -> float:
        return float(self.xi[-1])

    def __post_init__(self):
        # C^2 quintic Hermite interpolant through (Phi, Phi', Phi'') per component
        polys = []
        for i in range(self.m):
            y = np.stack([self.values[i], self.deriv[i], self.deriv2[i]], axis=1)
            polys.append(BPoly.from_derivatives(self.xi, y))
        object.__setattr__(self, "_polys", polys)
        object.__setattr__(self, "_dpolys", [[p, p.derivative(1), p.derivative(2)] for p in polys])

    def __call__(self, s, order: int = 0) -> np.ndarray:
        """``Phi^(order)(s)`` with shape ``(m,) + s.shape``; saturated outside the grid."""
        s = np.asarray(s, dtype=float)
        lo, hi = self.xi[0], self.xi[-1]
        sc = np.clip(s, lo, hi)
        out = np.empty((self.m,) + s.shape)
        for i in range(self.m):
            out[i] = self._dpolys[i][order](sc)
        if order == 0:
            out[:, s < lo] = 0.0
            out[:, s > hi] = 1.0
        else:
            out[:, (s < lo) | (s > hi)] = 0.0
        return out

    def level_position(self, level: float = 0.5, component: int = 0) -> float:
        return _level_crossing(self.xi, self.values[component], level)

    def to_text(self, extra: Optional[dict] = None) -> str:
        buf = io.StringIO()
        hdr = {"c": self.c, "h": self.h, "m": self.m}
        hdr.update(extra or {})
        buf.write("# " + " ".join(f"{k}={v!r}" for k, v in hdr.items()) + "\n")
        cols = ["xi"] + [f"phi{i + 1}" for i in range(self.m)] + [f"dphi{i + 1}" for i in range(self.m)]
        buf.write("# " + " ".join(cols) + "\n")
        np.savetxt(buf, np.column_stack([self.xi, self.values.T, self.deriv.T]), fmt="%.17g")
        return buf.getvalue()

    @classmethod
    def from_text(cls, text: str, D) -> "FrontProfile":
        lines = text.splitlines()
        hdr = dict(tok.split("=", 1) for tok in lines[0][2:].split())
        c = float(hdr["c"])
        m = int(hdr["m"])
        data = np.loadtxt(io.StringIO("\n".join(lines[2:])), ndmin=2)
        xi, vals, der = data[:, 0], data[:, 1 : 1 + m].T, data[:, 1 + m : 1 + 2 * m].T
        D = np.asarray(D, float)
        return cls(xi=xi, values=vals, deriv=der, deriv2=np.zeros_like(der), c=c, D=D,
                   meta={"loaded": True, **hdr})


def _level_crossing(x, v, level) -> float:
    idx = np.nonzero((v[:-1] - level) * (v[1:] - level) <= 0)[0]
    if idx.size == 0:
        raise FrontError(f"level {level} not crossed")
    k = idx[np.argmin(np.abs(x[idx]))]
    v0, v1 = v[k], v[k + 1]
    if v1 == v0:
        return float(x[k])
    return float(x[k] + (level - v0) / (v1 - v0) * (x[k + 1] - x[k]))


# ------------------------------------------------------------------ solver


def default_half_width(sys: SystemDef) -> float:
    rep = audit_assumptions(sys, sampling=5, strict=False)
    rate = np.sqrt(min(rep.pf.lambda0, rep.pf.lambda1) / sys.Dbar)
    return float(min(30.0 / rate, 80.0))


def _check_grid(Xi: float, h: float) -> int:
    n_half = Xi / h
    if abs(n_half - round(n_half)) > 1e-9 or n_half < 10:
        raise FrontError(f"half-width {Xi} must be an integer multiple (>= 10) of h = {h}")
    return int(round(n_half))


def _banded_operator(D_i, c, h, dt, n):
    """Banded form of ``I - dt (D_i d2 - c d1)`` on interior nodes."""
    lower = -dt * (D_i / h**2 + c / (2 * h))
    diag = 1.0 + dt * 2.0 * D_i / h**2
    upper = -dt * (D_i / h**2 - c / (2 * h))
    ab = np.zeros((3, n))
    ab[0, 1:] = upper
    ab[1, :] = diag
    ab[2, :-1] = lower
    return ab, lower, upper


def _monotonicity_defects(v, sat: float = 1e-10):
    """Grid steps where a component fails to increase; saturated tails only need to not decrease."""
    dv = np.diff(v, axis=1)
    gap = np.minimum(np.minimum(v[:, :-1], 1.0 - v[:, :-1]), np.minimum(v[:, 1:], 1.0 - v[:, 1:]))
    return np.argwhere((dv < -1e-13) | ((dv <= 0) & (gap > sat)))


def _diff_ops(n, h, order=2):
    """First and second difference matrices for interior nodes ``1..n-2`` acting on all ``n`` nodes.

    ``order=4`` uses five-point stencils away from the two outermost interior nodes.
    """
    rows1, rows2 = [], []
    for k in range(1, n - 1):
        if order == 4 and 2 <= k <= n - 3:
            rows1.append((k, [-2, -1, 1, 2], [1 / 12, -8 / 12, 8 / 12, -1 / 12]))
            rows2.append((k, [-2, -1, 0, 1, 2], [-1 / 12, 16 / 12, -30 / 12, 16 / 12, -1 / 12]))
        else:
            rows1.append((k, [-1, 1], [-0.5, 0.5]))
            rows2.append((k, [-1, 0, 1], [1.0, -2.0, 1.0]))

    def build(rows, scale):
        r, c, w = [], [], []
        for i, (k, offs, ws) in enumerate(rows):
            r += [i] * len(offs)
            c += [k + o for o in offs]
            w += ws
        return sp.csr_matrix((np.array(w) / scale, (r, c)), shape=(n - 2, n))

    return build(rows1, h), build(rows2, h * h)


def _residual(sys, v, c, h, ops=None):
    """Interior residual of ``D v'' - c v' + F(v)``."""
    d1, d2 = _diff_ops(v.shape[1], h) if ops is None else ops
    return sys.D[:, None] * (d2 @ v.T).T - c * (d1 @ v.T).T + sys.F(v[:, 1:-1])


def _node_derivative(v, h):
    """Sixth-order centred first derivative, lower order near the ends."""
    d = np.gradient(v, h, axis=1, edge_order=2)
    if v.shape[1] >= 7:
        d[:, 3:-3] = (-v[:, :-6] + 9 * v[:, 1:-5] - 45 * v[:, 2:-4] + 45 * v[:, 4:-2] - 9 * v[:, 5:-1] + v[:, 6:]) / (60 * h)
    return d


def _shift(xi, v, s):
    """Translate each component by ``s`` (v(xi) -> v(xi + s)), boundaries held."""
    out = np.stack([np.interp(xi + s, xi, vi, left=0.0, right=1.0) for vi in v])
    out[:, 0], out[:, -1] = 0.0, 1.0
    return out


def _freeze(sys, xi, v, c, h, dt, max_steps, tol):
    m, n = v.shape
    for step in range(max_steps):
        rhs = v[:, 1:-1] + dt * sys.F(v[:, 1:-1])
        new = v.copy()
        for i in range(m):
            ab, lower, upper = _banded_operator(sys.D[i], c, h, dt, n - 2)
            r = rhs[i].copy()
            r[-1] -= upper * v[i, -1]
            r[0] -= lower * v[i, 0]
            new[i, 1:-1] = solve_banded((1, 1), ab, r)
        new = np.clip(new, 0.0, 1.0)
        p = _level_crossing(xi, new[0], 0.5)
        drift = p / dt
        c_new = c - drift
        new = _shift(xi, new, p)
        change = np.max(np.abs(new - v)) / dt
        v, dc, c = new, abs(c_new - c), c_new
        if dc < tol and change < 1e-4:
            return v, c, step + 1
    return v, c, max_steps


def _newton(sys, v, c, h, i0, tol, max_iter=30, order=2):
    m, n = v.shape
    ni = n - 2
    ops = _diff_ops(n, h, order)
    d1, d2 = ops[0][:, 1:-1], ops[1][:, 1:-1]
    res_norm = np.inf
    for it in range(max_iter):
        R = _residual(sys, v, c, h, ops)
        res_norm = float(np.max(np.abs(R)))
        phase = v[0, i0] - 0.5
        if res_norm < tol and abs(phase) < tol:
            return v, c, res_norm, it
        J = jacobian(sys, v[:, 1:-1])
        blocks = [[None] * m for _ in range(m)]
        for i in range(m):
            for j in range(m):
                blk = sp.diags(J[i, j])
                if i == j:
                    blk = sys.D[i] * d2 - c * d1 + blk
                blocks[i][j] = blk
        A = sp.bmat(blocks, format="csc")
        dcol = -(ops[0] @ v.T).T.reshape(-1)
        row = np.zeros(m * ni)
        row[i0 - 1] = 1.0
        big = sp.bmat([[A, sp.csr_matrix(dcol[:, None])], [sp.csr_matrix(row[None, :]), None]], format="csc")
        rhs = -np.concatenate([R.reshape(-1), [phase]])
        delta = spsolve(big, rhs)
        v = v.copy()
        v[:, 1:-1] += delta[:-1].reshape(m, ni)
        c += delta[-1]
    raise FrontError(f"no-convergence: Newton residual {res_norm:.3e} after {max_iter} iterations")


def interpolant_residual(sys: SystemDef, prof: "FrontProfile", inner: float = 0.8) -> float:
    """Max ODE residual of the C2 interpolant at cell midpoints of the inner part of the grid."""
    mid = 0.5 * (prof.xi[1:] + prof.xi[:-1])
    mid = mid[np.abs(mid) <= inner * prof.half_width]
    v, d1, d2 = prof(mid, 0), prof(mid, 1), prof(mid, 2)
    R = sys.D[:, None] * d2 - prof.c * d1 + sys.F(v)
    return float(np.abs(R).max())


def solve_planar_front(
    sys: SystemDef,
    half_width: Optional[float] = None,
    h: float = 0.05,
    tol: float = 1e-10,
    tol_res: float = 1e-9,
    max_steps: int = 20000,
    dt: Optional[float] = None,
    init_shift: float = 0.0,
    init_speed: float = 0.0,
) -> FrontProfile:
    """Traveling front connecting 0 to 1, normalized so that Phi_1(0) = 1/2."""
    Xi = default_half_width(sys) if half_width is None else float(half_width)
    if half_width is None:
        Xi = h * np.ceil(Xi / h)
    n_half = _check_grid(Xi, h)
    xi = np.linspace(-Xi, Xi, 2 * n_half + 1)
    m = sys.m
    v = np.tile(0.5 * (1.0 + np.tanh((xi - init_shift) / 4.0)), (m, 1))
    v[:, 0], v[:, -1] = 0.0, 1.0
    if dt is None:
        rep_lambda = float(np.max(np.abs(jacobian(sys, v)).sum(axis=1)))
        dt = min(1.0, 0.5 / max(rep_lambda, 1e-12))
    v, c, steps = _freeze(sys, xi, v, init_speed, h, dt, max_steps, tol=1e-6)
    v, c, _, _ = _newton(sys, v, c, h, n_half, tol=tol_res)
    v, c, res, its = _newton(sys, v, c, h, n_half, tol=tol_res, order=4)
    d1 = _node_derivative(v, h)
    bad = _monotonicity_defects(v)
    if bad.size:
        bad = bad[0]
        raise FrontError(f"non-monotone-profile: component {bad[0] + 1} at xi={xi[bad[1]]:.3f}")
    d2 = (c * d1 - sys.F(v)) / sys.D[:, None]
    return FrontProfile(
        xi=xi, values=v, deriv=d1, deriv2=d2, c=float(c), D=sys.D.copy(), residual=res,
        meta={"freeze_steps": steps, "newton_iters": its, "system": sys.name, "dt": dt},
    )


def parabolic_drift(sys: SystemDef, prof: FrontProfile, c_trial: float, duration: float = 20.0) -> float:
    """Speed at which the half level moves in a frame travelling at ``c_trial``."""
    xi, h = prof.xi, prof.h
    v = prof.values.copy()
    dt = 0.1
    m, n = v.shape
    steps = int(round(duration / dt))
    for _ in range(steps):
        rhs = v[:, 1:-1] + dt * sys.F(v[:, 1:-1])
        for i in range(m):
            ab, lower, upper = _banded_operator(sys.D[i], c_trial, h, dt, n - 2)
            r = rhs[i].copy()
            r[-1] -= upper * v[i, -1]
            r[0] -= lower * v[i, 0]
            v[i, 1:-1] = solve_banded((1, 1), ab, r)
    return abs(_level_crossing(xi, v[0], 0.5)) / duration


# ------------------------------------------------------------- diagnostics


@dataclass(frozen=True)
class DecayReport:
    a: float
    b: float
    b_left: float
    b_right: float
    Kbar1: float
    Cconc: float
    fit_residuals: tuple
    envelope_ok: bool
    impo_ok: bool


def _envelopes(prof: FrontProfile):
    v, d1, d2 = prof.values, np.abs(prof.deriv), np.abs(prof.deriv2)
    left = np.max(np.maximum(np.maximum(v, d1), d2), axis=0)
    right = np.max(np.maximum(np.maximum(1.0 - v, d1), d2), axis=0)
    return left, right


def front_diagnostics(prof: FrontProfile, window=(0.5, 0.85), trusted: float = 0.9) -> DecayReport:
    """Exponential envelopes, derivative ratio bound and concavity threshold."""
    xi, Xi = prof.xi, prof.half_width
    left, right = _envelopes(prof)
    floor = 1e-11
    fits, rates = [], []
    for env, sign in ((left, -1.0), (right, 1.0)):
        # stay above the round-off floor of 1 - Phi near saturation
        sel = (sign * xi >= window[0] * Xi) & (sign * xi <= window[1] * Xi) & (env > floor)
        if sel.sum() < 5:
            sel = (sign * xi > 0) & (env > floor) & (env < 1e-4)
        y = env[sel]
        if sel.sum() < 5 or np.any(y <= 0) or np.any(~np.isfinite(np.log(y))):
            raise FrontError("fit-degenerate: tail window empty or saturated; enlarge the half-width")
        slope, icept = np.polyfit(np.abs(xi[sel]), np.log(y), 1)
        resid = float(np.sqrt(np.mean((np.log(y) - (icept + slope * np.abs(xi[sel]))) ** 2)))
        if slope >= 0:
            raise FrontError("fit-degenerate: tail is not decaying; enlarge the half-width")
        rates.append(-slope)
        fits.append(resid)
    b = float(min(rates))
    env = np.where(xi < 0, left, right)
    real = env > floor
    a = float(np.max(env[real] * np.exp(b * np.abs(xi[real]))))
    envelope_ok = bool(np.all(env[real] <= a * np.exp(-b * np.abs(xi[real])) * (1 + 1e-12)))

    inner = (np.abs(xi) <= trusted * Xi) & np.all(prof.deriv > floor, axis=0)
    d1, d2 = prof.deriv[:, inner], prof.deriv2[:, inner]
    Kbar1 = float(np.max(np.abs(d2) / d1))
    impo_ok = bool(np.all(np.abs(d2) <= Kbar1 * d1 * (1 + 1e-14)))
    convex = np.any(d2 > 1e-8 * np.max(np.abs(d2)), axis=0)
    xs = xi[inner]
    Cconc = float(xs[convex].max()) if convex.any() else float(xs[0])
    return DecayReport(a=a, b=b, b_left=float(rates[0]), b_right=float(rates[1]), Kbar1=Kbar1, Cconc=Cconc,
                       fit_residuals=tuple(fits), envelope_ok=envelope_ok, impo_ok=impo_ok)


# --------------------------------------------------------------- half-line


@dataclass(frozen=True, eq=False)
class HalflineProfile:
    xi: np.ndarray
    values: np.ndarray
    residual: float
    snapshots: np.ndarray  # (k, m, n) iterates of the parabolic flow
    meta: dict = field(default_factory=dict)


def _halfline_residual(sys, U, h):
    d2 = (U[:, 2:] - 2 * U[:, 1:-1] + U[:, :-2]) / h**2
    return sys.D[:, None] * d2 + sys.F(U[:, 1:-1])


def solve_halfline_ground_state(
    sys: SystemDef,
    front: FrontProfile,
    half_width: float = 40.0,
    h: Optional[float] = None,
    tol: float = 1e-6,
    shift: Optional[float] = None,
    max_time: float = 4000.0,
    n_snapshots: int = 50,
) -> HalflineProfile:
    """Increasing solution of ``D U'' + F(U) = 0`` with ``U(0) = 0``, ``U(inf) = 1``."""
    h = front.h if h is None else h
    n = int(round(half_width / h))
    xi = np.linspace(0.0, n * h, n + 1)
    S = 0.5 * half_width if shift is None else shift
    U = front(xi - S) - front(np.array([-S]))
    U = np.clip(U, 0.0, 1.0)
    U[:, 0], U[:, -1] = 0.0, 1.0
    m = sys.m
    Lam = float(np.max(np.abs(jacobian(sys, np.linspace(0, 1, 33)[None, :].repeat(m, 0))).sum(axis=1)))
    dt = 1.0 / max(Lam, 1e-12)
    ab = []
    for i in range(m):
        band, lower, upper = _banded_operator(sys.D[i], 0.0, h, dt, n - 1)
        ab.append((band, lower, upper))
    steps = int(max_time / dt)
    every = max(1, steps // n_snapshots)
    snaps = [U.copy()]
    for k in range(steps):
        rhs = U[:, 1:-1] + dt * sys.F(U[:, 1:-1])
        new = U.copy()
        for i in range(m):
            band, lower, upper = ab[i]
            r = rhs[i].copy()
            r[-1] -= upper * U[i, -1]
            new[i, 1:-1] = solve_banded((1, 1), band, r)
        change = np.max(np.abs(new - U))
        U = new
        if (k + 1) % every == 0:
            snaps.append(U.copy())
        if change < 1e-10 * dt:
            break
    if np.max(U) < 0.5:
        raise FrontError("collapse-to-zero: initial hump below the invasion threshold; enlarge the shift")
    snaps.append(U.copy())
    # Newton polish of the stationary problem
    ni = n - 1
    e = np.ones(ni)
    d2 = sp.diags([e[:-1], -2 * e, e[:-1]], [-1, 0, 1]) / h**2
    res = float(np.max(np.abs(_halfline_residual(sys, U, h))))
    for _ in range(20):
        if res <= tol * 1e-2:
            break
        J = jacobian(sys, U[:, 1:-1])
        blocks = [[sp.diags(J[i, j]) + (sys.D[i] * d2 if i == j else 0) for j in range(m)] for i in range(m)]
        A = sp.bmat(blocks, format="csc")
        R = _halfline_residual(sys, U, h)
        U = U.copy()
        U[:, 1:-1] -= spsolve(A, R.reshape(-1)).reshape(m, ni)
        res = float(np.max(np.abs(_halfline_residual(sys, U, h))))
    if res > tol:
        raise FrontError(f"no-convergence: half-line residual {res:.3e} > {tol:.1e}")
    return HalflineProfile(xi=xi, values=U, residual=res, snapshots=np.array(snaps), meta={"dt": dt, "shift": S})
