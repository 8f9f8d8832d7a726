"""Operator residuals of explicit sub/supersolution candidates.

A candidate is a front plus a padded correction,

    u(t, x) = Phi(xi(t, x)) + A e^{rate t} zeta(x) Q(xi(t, x)),

optionally clipped from above by 1 or from below by 0.  Its space-time
derivatives follow from the chain rule through ``Phi``, ``Q`` and ``zeta``,
so the residual ``u_t - D lap u - F(u)`` is evaluated without any mesh.

Builders recompute every constant of the barrier constructions from the
estimated ledger with a safety factor and keep an audit trail naming the
inequality each constant satisfies.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.optimize import brentq

from .errors import VerifierError
from .front1d import FrontProfile
from .geometry import Obstacle, ZetaField
from .systems import ConstantsLedger, PQFunctions, SystemDef, smoothstep, smoothstep_d1

TOL_REL = 1e-3
SAFETY = 2.0


# ------------------------------------------------------------------ phases


@dataclass(frozen=True)
class PlanarPhase:
    """``xi = x1 + c t + offset + amp (e^{rate t} - base)``."""

    c: float
    offset: float = 0.0
    amp: float = 0.0
    rate: float = 0.0
    base: float = 0.0

    def __call__(self, t, X):
        e = np.exp(self.rate * t) if self.amp else 0.0
        xi = X[0] + self.c * t + self.offset + self.amp * (e - self.base)
        xi_t = self.c + self.amp * self.rate * e + np.zeros_like(xi)
        grad = np.zeros((2,) + xi.shape)
        grad[0] = 1.0
        return xi, xi_t, grad, np.zeros_like(xi)


@dataclass(frozen=True)
class HProfile:
    """Radial profile ``h``: constant near 0, identity beyond ``H``, ``0 <= h' <= 1``.

    ``h'`` is a quintic smoothstep ramp on ``[r0, H]``, so ``h`` is C3 and
    ``h(0) = (H + r0) / 2``.
    """

    r0: float
    H: float

    @property
    def h0(self) -> float:
        return 0.5 * (self.H + self.r0)

    def _z(self, r):
        return np.clip((np.asarray(r, float) - self.r0) / (self.H - self.r0), 0.0, 1.0)

    def value(self, r):
        r = np.asarray(r, float)
        z = self._z(r)
        ramp = self.h0 + (self.H - self.r0) * (2.5 * z**4 - 3.0 * z**5 + z**6)
        return np.where(r >= self.H, r, ramp)

    def d1(self, r):
        return smoothstep(self._z(r))

    def d2(self, r):
        r = np.asarray(r, float)
        inside = (r > self.r0) & (r < self.H)
        return np.where(inside, smoothstep_d1(self._z(r)) / (self.H - self.r0), 0.0)

    def radial_operator(self, r):
        """``h'/r + h''`` (the two-dimensional radial Laplacian of ``h``)."""
        r = np.asarray(r, float)
        return np.where(r > 0, self.d1(r) / np.maximum(r, 1e-300), 0.0) + self.d2(r)


def build_h_profile(mu: float, n_alpha: int = 199, n_z: int = 4001) -> HProfile:
    """Smallest-``H`` ramp with ``h'/r + h'' <= mu/2``."""
    if not np.isfinite(mu) or mu <= 0:
        raise VerifierError(f"hmu-construction-failure: mu={mu} must be positive")
    z = np.linspace(0.0, 1.0, n_z)
    S, dS = smoothstep(z), smoothstep_d1(z)
    best = None
    for alpha in np.linspace(0.005, 0.995, n_alpha):
        # with r = H (alpha + (1-alpha) z) the constraint reads H >= (2/mu) * g(alpha)
        g = float(np.max(S / (alpha + (1 - alpha) * z) + dS / (1 - alpha)))
        if best is None or g < best[1]:
            best = (alpha, g)
    alpha, g = best
    H = 2.0 / mu * g * (1 + 1e-9)
    prof = HProfile(r0=alpha * H, H=H)
    r = np.concatenate([np.linspace(0, 3 * H, 20001), H * (1 + np.logspace(-8, 3, 200))])
    lhs = prof.radial_operator(r)
    hp = prof.d1(r)
    if np.any(lhs > 0.5 * mu * (1 + 1e-6)) or np.any(hp < 0) or np.any(hp > 1) or prof.d1(0.5 * prof.r0) != 0:
        raise VerifierError(f"hmu-construction-failure: ramp violates the radial bound at mu={mu}")
    return prof


@dataclass(frozen=True)
class RadialPhase:
    """``xi = -h(|x|) + speed t + w e^{-decay t} + shift`` in coordinates centred at the ball centre."""

    hprof: HProfile
    speed: float
    w: float
    decay: float
    shift: float

    def __call__(self, t, X):
        r = np.hypot(X[0], X[1])
        e = np.exp(-self.decay * t)
        xi = -self.hprof.value(r) + self.speed * t + self.w * e + self.shift
        xi_t = self.speed - self.decay * self.w * e + np.zeros_like(xi)
        hp = self.hprof.d1(r)
        safe = np.maximum(r, 1e-300)
        grad = -hp * X / safe
        lap = -self.hprof.radial_operator(r)
        return xi, xi_t, grad, lap


# ------------------------------------------------------------- candidates


@dataclass
class CandidateEval:
    raw: np.ndarray  # (m, N) unclipped value
    value: np.ndarray  # (m, N) clipped value
    u_t: np.ndarray
    grad: np.ndarray  # (m, 2, N)
    lap: np.ndarray
    active: np.ndarray  # (m, N) nontrivial branch


@dataclass(frozen=True, eq=False)
class CandidateFunction:
    """``Phi(xi) + amp e^{rate t} zeta Q(xi)``, clipped per ``clip`` (``"upper"``: min with 1, ``"lower"``: max with 0).

    Evaluation points are given in a local frame; ``origin`` maps them to the
    physical plane where ``zeta`` lives.
    """

    name: str
    kind: str  # "super" or "sub"
    front: FrontProfile
    phase: Callable
    pq: Optional[PQFunctions] = None
    zeta: Optional[ZetaField] = None
    amp: float = 0.0
    rate: float = 0.0
    clip: Optional[str] = None
    origin: np.ndarray = field(default_factory=lambda: np.zeros(2))
    t_range: tuple = (-np.inf, np.inf)
    constants: dict = field(default_factory=dict)
    audit: list = field(default_factory=list)
    region: Optional[Callable] = None  # (n, seed) -> SampleRegion

    def _zeta(self, X):
        if self.zeta is None or self.amp == 0.0:
            n = X.shape[1:]
            return np.ones(n), np.zeros((2,) + n), np.zeros(n)
        P = X + self.origin.reshape((2,) + (1,) * (X.ndim - 1))
        return self.zeta.value(P), self.zeta.grad(P), self.zeta.lap(P)

    def evaluate(self, t, X) -> CandidateEval:
        X = np.asarray(X, float)
        t = np.broadcast_to(np.asarray(t, float), X.shape[1:])
        xi, xi_t, gxi, lxi = self.phase(t, X)
        f0, f1, f2 = self.front(xi, 0), self.front(xi, 1), self.front(xi, 2)
        g2 = np.sum(gxi * gxi, axis=0)
        raw = f0
        u_t = f1 * xi_t
        grad = f1[:, None] * gxi[None]
        lap = f2 * g2 + f1 * lxi
        if self.amp != 0.0:
            z, gz, lz = self._zeta(X)
            q0, q1, q2 = self.pq.q(xi, 0), self.pq.q(xi, 1), self.pq.q(xi, 2)
            e = self.amp * np.exp(self.rate * t)
            raw = raw + e * z * q0
            u_t = u_t + e * z * (self.rate * q0 + q1 * xi_t)
            grad = grad + e * (q0[:, None] * gz[None] + (z * q1)[:, None] * gxi[None])
            lap = lap + e * (q0 * lz + 2.0 * q1 * np.sum(gxi * gz, axis=0) + z * (q2 * g2 + q1 * lxi))
        if self.clip == "upper":
            value, active = np.minimum(raw, 1.0), raw < 1.0
        elif self.clip == "lower":
            value, active = np.maximum(raw, 0.0), raw > 0.0
        else:
            value, active = raw, np.ones(raw.shape, bool)
        return CandidateEval(raw, value, u_t, grad, lap, active)

    def __call__(self, t, X) -> np.ndarray:
        return self.evaluate(t, X).value


@dataclass(frozen=True, eq=False)
class FunctionCandidate:
    """Candidate given by a plain evaluator; derivatives by fourth-order central differences."""

    name: str
    kind: str
    fn: Callable  # (t, X) -> (m, N)
    h_d: float = 1e-3
    clip: Optional[str] = None
    origin: np.ndarray = field(default_factory=lambda: np.zeros(2))
    constants: dict = field(default_factory=dict)
    audit: list = field(default_factory=list)
    region: Optional[Callable] = None

    def evaluate(self, t, X) -> CandidateEval:
        X = np.asarray(X, float)
        t = np.broadcast_to(np.asarray(t, float), X.shape[1:])
        raw = np.asarray(self.fn(t, X), float)
        u_t = _fd1(lambda s: self.fn(t + s, X), self.h_d)
        grad = np.stack([_fd1(lambda s, k=k: self.fn(t, X + s * _unit(k, X)), self.h_d) for k in range(2)], axis=1)
        lap = sum(_fd2(lambda s, k=k: self.fn(t, X + s * _unit(k, X)), self.h_d, raw) for k in range(2))
        if self.clip == "upper":
            value, active = np.minimum(raw, 1.0), raw < 1.0
        elif self.clip == "lower":
            value, active = np.maximum(raw, 0.0), raw > 0.0
        else:
            value, active = raw, np.ones(raw.shape, bool)
        return CandidateEval(raw, value, u_t, grad, lap, active)

    def __call__(self, t, X):
        return self.evaluate(t, X).value


def _unit(k, X):
    e = np.zeros((2,) + (1,) * (X.ndim - 1))
    e[k] = 1.0
    return e


def _fd1(f, h):
    return (-f(2 * h) + 8 * f(h) - 8 * f(-h) + f(-2 * h)) / (12 * h)


def _fd2(f, h, f0):
    return (-f(2 * h) + 16 * f(h) - 30 * f0 + 16 * f(-h) - f(-2 * h)) / (12 * h * h)


def constant_candidate(v0, kind: str = "sub") -> FunctionCandidate:
    v0 = np.asarray(v0, float)
    return FunctionCandidate(name="constant", kind=kind, fn=lambda t, X: np.broadcast_to(
        v0.reshape((-1,) + (1,) * (X.ndim - 1)), (len(v0),) + X.shape[1:]).copy())


def front_candidate(front: FrontProfile, shift: float = 0.0) -> CandidateFunction:
    """The exact planar front ``Phi(x1 + c t + shift)``."""
    return CandidateFunction(name="planar-front", kind="exact", front=front, phase=PlanarPhase(c=front.c, offset=shift))


# ----------------------------------------------------------------- samples


@dataclass
class SampleRegion:
    t: np.ndarray  # (N,)
    X: np.ndarray  # (2, N) local coordinates
    t_b: np.ndarray = field(default_factory=lambda: np.zeros(0))
    X_b: np.ndarray = field(default_factory=lambda: np.zeros((2, 0)))
    nu_b: np.ndarray = field(default_factory=lambda: np.zeros((2, 0)))  # outward normal of the exterior domain

    @property
    def n(self) -> int:
        return len(self.t)


def boundary_samples(obs: Obstacle, n: int = 720) -> tuple[np.ndarray, np.ndarray]:
    """Points on the outer boundary of ``K`` along rays from its centre, and the outward normal of the domain."""
    if obs.empty:
        return np.zeros((2, 0)), np.zeros((2, 0))
    th = np.linspace(0, 2 * np.pi, n, endpoint=False)
    rmax = obs.bound_radius + np.linalg.norm(obs.center) + 1.0
    rs = np.linspace(rmax, 0.0, 2001)
    pts = []
    for a in th:
        d = np.array([np.cos(a), np.sin(a)])
        P = obs.center[:, None] + rs[None] * d[:, None]
        v = obs.phi(P)
        k = np.argmax(v <= 0)
        if v[k] > 0:
            continue
        f = lambda s: float(obs.phi((obs.center + s * d)[:, None])[0])
        s = brentq(f, rs[k], rs[k - 1], xtol=1e-13)
        pts.append(obs.center + s * d)
    P = np.array(pts).T
    return P, -obs.normal(P)


def _fluid_points(obs: Obstacle, lo, hi, n, rng, origin) -> np.ndarray:
    """Uniform points in a box (physical coordinates) outside ``K``, returned in local coordinates."""
    out = np.zeros((2, 0))
    while out.shape[1] < n:
        P = np.stack([rng.uniform(lo[0], hi[0], 2 * n), rng.uniform(lo[1], hi[1], 2 * n)])
        P = P[:, obs.phi(P) > 0]
        out = np.concatenate([out, P], axis=1)
    return out[:, :n] - origin[:, None]


def grid_region(grid, t_range, n_t: int = 21) -> SampleRegion:
    """All fluid cell centres crossed with ``n_t`` equally spaced times."""
    P = grid.mesh()[:, grid.fluid]
    ts = np.linspace(t_range[0], t_range[1], n_t)
    return SampleRegion(t=np.repeat(ts, P.shape[1]), X=np.tile(P, (1, n_t)))


def merge_regions(*regions: SampleRegion) -> SampleRegion:
    cat = lambda name, ax: np.concatenate([getattr(r, name) for r in regions], axis=ax)
    return SampleRegion(cat("t", 0), cat("X", 1), cat("t_b", 0), cat("X_b", 1), cat("nu_b", 1))


# ------------------------------------------------------------------ report


@dataclass
class ResidualReport:
    name: str
    kind: str
    n_samples: int
    n_active: np.ndarray  # per component
    min: np.ndarray
    max: np.ndarray
    margin: float  # smallest signed slack in units of the pointwise tolerance
    worst: dict
    violations: np.ndarray  # rows: component, t, x, y, residual, tolerance
    boundary_min: np.ndarray
    boundary_max: np.ndarray
    boundary_violations: int
    derivative_error: float
    region: SampleRegion
    tol_rel: float
    audit: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return len(self.violations) == 0 and self.boundary_violations == 0

    def to_text(self) -> str:
        lines = [f"candidate {self.name} ({self.kind}): {self.n_samples} samples, tol = {self.tol_rel:g} x term scale"]
        for i in range(len(self.min)):
            lines.append(f"  component {i + 1}: active {self.n_active[i]}, min {self.min[i]:.6e}, max {self.max[i]:.6e}, "
                         f"normal derivative [{self.boundary_min[i]:.4e}, {self.boundary_max[i]:.4e}]")
        lines.append(f"  margin {self.margin:.4g}, violations {len(self.violations)}, boundary violations "
                     f"{self.boundary_violations}, derivative check {self.derivative_error:.2e}")
        if self.worst:
            lines.append(f"  worst point: {self.worst}")
        for name, value, rule in self.audit:
            lines.append(f"  {name} = {value:.6g}   [{rule}]")
        return "\n".join(lines)


def derivative_check(cand, t, X, h_d: float = 1e-2, max_coord: float = 1e4) -> float:
    """Largest disagreement between the candidate's derivatives and finite differences of its raw value.

    Normalized by the largest magnitude of each derivative over the subsample.
    Points with large coordinates are skipped because differences lose precision there.
    """
    if isinstance(cand, FunctionCandidate):
        return 0.0
    t = np.asarray(t, float)
    X = np.asarray(X, float)
    ok = (np.abs(t) <= max_coord) & (np.abs(X).max(axis=0) <= max_coord)
    if not ok.any():
        return float("nan")
    t, X = t[ok], X[:, ok]
    ev = cand.evaluate(t, X)
    raw = lambda tt, XX: cand.evaluate(tt, XX).raw
    fd_t = _fd1(lambda s: raw(t + s, X), h_d)
    fd_g = np.stack([_fd1(lambda s, k=k: raw(t, X + s * _unit(k, X)), h_d) for k in range(2)], axis=1)
    fd_l = sum(_fd2(lambda s, k=k: raw(t, X + s * _unit(k, X)), h_d, ev.raw) for k in range(2))
    err = 0.0
    for a, b in ((ev.u_t, fd_t), (ev.grad, fd_g), (ev.lap, fd_l)):
        scale = max(float(np.abs(a).max()), 1e-300)
        err = max(err, float(np.abs(a - b).max()) / scale)
    return err


def _roundoff_floor(sys: SystemDef, u: np.ndarray) -> np.ndarray:
    """Error in ``F(u)`` caused by rounding ``u`` itself: a few ulps times the Jacobian row sums."""
    if sys.jac is None:
        return np.zeros_like(u)
    J = sys.jac(u)  # (m, m, N)
    return 8.0 * np.finfo(float).eps * np.abs(J).sum(axis=1)


def operator_residual(cand, sys: SystemDef, region: Optional[SampleRegion] = None, n: int = 100_000, seed: int = 0,
                      tol_rel: float = TOL_REL, derivative_tol: float = 1e-5, check_derivatives: bool = True,
                      n_check: int = 400) -> ResidualReport:
    """Residual ``u_t - D lap u - F(u)`` on the active branch, plus normal derivatives at boundary samples.

    Supersolutions need ``L >= -tol`` and ``nu . grad u >= -tol``; subsolutions
    the mirrored inequalities, with ``nu`` the outward normal of the domain.
    """
    if region is None:
        if cand.region is None:
            raise VerifierError("no sample region given and the candidate has no default region")
        region = cand.region(n, seed)
    t, X = region.t, region.X
    deriv_err = float("nan")
    if check_derivatives and region.n:
        sub = np.random.default_rng(seed).choice(region.n, size=min(n_check, region.n), replace=False)
        deriv_err = derivative_check(cand, t[sub], X[:, sub])
        if np.isfinite(deriv_err) and deriv_err > derivative_tol:
            raise VerifierError(f"derivative-inconsistency: analytic and finite-difference derivatives of "
                                f"{cand.name} differ by {deriv_err:.2e} (relative)")

    ev = cand.evaluate(t, X)
    D = sys.D[:, None]
    Fu = sys.F(ev.value)
    L = ev.u_t - D * ev.lap - Fu
    tol = tol_rel * (np.abs(ev.u_t) + D * np.abs(ev.lap) + np.abs(Fu)) + _roundoff_floor(sys, ev.value)
    act = ev.active
    sign = -1.0 if cand.kind == "sub" else 1.0
    m = sys.m
    mins = np.array([L[i, act[i]].min() if act[i].any() else np.nan for i in range(m)])
    maxs = np.array([L[i, act[i]].max() if act[i].any() else np.nan for i in range(m)])
    if cand.kind in ("super", "sub"):
        slack = np.where(act, (sign * L + tol) / np.maximum(tol, 1e-300), np.inf)
        bad = act & (sign * L < -tol)
    else:  # exact solutions: two-sided
        slack = np.where(act, (tol - np.abs(L)) / np.maximum(tol, 1e-300), np.inf)
        bad = act & (np.abs(L) > tol)
    margin = float(slack.min()) if act.any() else float("inf")
    worst = {}
    if act.any():
        i, j = np.unravel_index(np.argmin(slack), slack.shape)
        P = X[:, j] + cand.origin
        worst = {"component": int(i) + 1, "t": float(t[j]), "x": [float(P[0]), float(P[1])],
                 "residual": float(L[i, j]), "tolerance": float(tol[i, j])}
    bi, bj = np.nonzero(bad)
    viol = np.column_stack([bi + 1, t[bj], X[0, bj] + cand.origin[0], X[1, bj] + cand.origin[1], L[bi, bj], tol[bi, bj]]) \
        if bi.size else np.zeros((0, 6))

    bmin = np.full(m, np.nan)
    bmax = np.full(m, np.nan)
    bviol = 0
    if len(region.t_b):
        eb = cand.evaluate(region.t_b, region.X_b)
        dn = np.einsum("kn,mkn->mn", region.nu_b, eb.grad)
        btol = tol_rel * np.linalg.norm(eb.grad, axis=1)
        for i in range(m):
            a = eb.active[i]
            if a.any():
                bmin[i], bmax[i] = dn[i, a].min(), dn[i, a].max()
        if cand.kind in ("super", "sub"):
            bviol = int(np.sum(eb.active & (sign * dn < -btol)))
    return ResidualReport(cand.name, cand.kind, region.n, act.sum(axis=1), mins, maxs, margin, worst, viol, bmin, bmax,
                          bviol, deriv_err, region, tol_rel, list(getattr(cand, "audit", [])))


def discrete_residual(sim, u_prev: np.ndarray, u_next: np.ndarray, dt: float) -> np.ndarray:
    """Residual of two solver snapshots with the solver's own Laplacian and a difference quotient in time."""
    sys = sim.scen.system
    return (u_next - u_prev) / dt - sys.D[:, None] * sim.apply_laplacian(u_prev) - sim._field(u_prev)


# --------------------------------------------------------------- builders


def _audit(audit, name, value, rule):
    audit.append((name, float(value), rule))
    return float(value)


def level_threshold(front: FrontProfile, eps: float, concave: bool = False) -> float:
    """Smallest ``C >= 1`` with ``Phi <= eps`` below ``-C`` and ``Phi >= 1 - eps`` above ``C`` (all components).

    With ``concave`` the profile must also satisfy ``Phi'' <= 0`` above ``C``.
    """
    xi, v = front.xi, front.values
    lo = np.any(v > eps, axis=0)
    hi = np.any(v < 1.0 - eps, axis=0)
    if not lo.any() or not hi.any():
        raise VerifierError("level threshold undefined for this profile")
    C = max(-xi[lo].min(), xi[hi].max()) + front.h
    if concave:
        d2 = front.deriv2
        convex = np.any(d2 > 1e-8 * np.abs(d2).max(), axis=0) & (xi > 0)
        if convex.any():
            C = max(C, xi[convex].max() + front.h)
    if C >= front.half_width - front.h:
        raise VerifierError(f"profile too short: threshold {C:.3g} reaches the end of the grid; enlarge the half-width")
    return max(C, 1.0)


def min_slope(front: FrontProfile, C: float, n: int = 20001) -> float:
    s = np.linspace(-C, C, n)
    return float(front(s, 1).min())


def _zeta_norms(zeta: ZetaField, grid=None) -> dict:
    return zeta.norms(grid)


def _need_front(ledger: ConstantsLedger):
    if ledger.a is None or ledger.b is None or ledger.c is None or ledger.L is None:
        raise VerifierError("ledger needs front (a, b, c) and obstacle (L) data")


def _planar_region(cands, front_window, t_range, obstacle, y_half, near_box, seed_offset=0, boundary_n=720):
    """Space-time samples split between the moving front zone of each candidate and the obstacle vicinity."""

    def make(n, seed):
        rng = np.random.default_rng(seed + seed_offset)
        parts = []
        k = len(cands) + 1
        per = n // k
        for cand in cands:
            t = rng.uniform(*t_range, per)
            target = rng.uniform(*front_window, per)
            xi0, *_ = cand.phase(t, np.zeros((2, per)))
            X = np.stack([target - xi0, rng.uniform(-y_half, y_half, per)])
            keep = obstacle.phi(X) > 0
            parts.append(SampleRegion(t[keep], X[:, keep]))
        rest = n - sum(p.n for p in parts)
        t = rng.uniform(*t_range, rest)
        X = _fluid_points(obstacle, (-near_box, -near_box), (near_box, near_box), rest, rng, np.zeros(2))
        parts.append(SampleRegion(t, X))
        Pb, nub = boundary_samples(obstacle, boundary_n)
        if Pb.shape[1]:
            nt = 8
            tb = rng.uniform(*t_range, nt * Pb.shape[1])
            parts.append(SampleRegion(np.zeros(0), np.zeros((2, 0)), tb, np.tile(Pb, (1, nt)), np.tile(nub, (1, nt))))
        return merge_regions(*parts)

    return make


@dataclass
class BarrierPair:
    lower: CandidateFunction
    upper: CandidateFunction
    constants: dict
    audit: list

    def region(self, n: int = 100_000, seed: int = 0) -> SampleRegion:
        return self.upper.region(n, seed)


def growing_pair_constants(ledger: ConstantsLedger, pq: PQFunctions, zeta: ZetaField, front: FrontProfile,
                           safety: float = SAFETY, grid=None) -> tuple[dict, list]:
    """Constants of the growing pair ``Phi(x1 + ct -+ w e^{eta t}) -+ padding`` valid for ``t <= T``."""
    _need_front(ledger)
    audit = []
    ql, qh = pq.pf.qstar_low, pq.pf.qstar_high
    a, b, c, L = ledger.a, ledger.b, ledger.c, ledger.L
    Dbar, M, Lam = ledger.Dbar, pq.M, ledger.Lambda
    eta = _audit(audit, "eta", ledger.eta, "min(bc/2, varpi/2)")
    nz = _zeta_norms(zeta, grid)
    Z, Zg, Zl = nz["zeta"], nz["grad"], nz["lap"]
    delta = _audit(audit, "delta", 2.0 * ledger.eps0 / ql, "delta q_low = 2 eps0 (padding stays in the eps0-balls)")
    C = _audit(audit, "C", level_threshold(front, delta * ql), "Phi within delta q_low of 0 / 1 beyond -C / C")
    kappa = _audit(audit, "kappa", min_slope(front, C), "min of Phi' on [-C, C]")
    A = 2.0 * a * delta / ql
    w_min = (2 * a / ql) * ((c * M + eta * M + Dbar * M + Lam * qh) * Z + 2 * Dbar * M * Zg + Dbar * qh * Zl) / (eta * kappa)
    w = _audit(audit, "w", safety * w_min, f"shift-speed bound: w eta kappa dominates the padding terms (x{safety:g})")
    E = min(1.0 / w, ql**2 / (2 * a * qh * Z), kappa * ql / (4 * a * delta * M * Z))
    T1 = (np.log(E) - np.log(safety)) / eta
    T2 = 2.0 * (np.log(delta) / b - L - 1.0) / c
    T = _audit(audit, "T", min(T1, T2), "start-time bound: shift and padding small, front far left of the obstacle")
    consts = dict(delta=delta, C=C, kappa=kappa, eta=eta, w=w, w_min=w_min, T=T, T_growth=T1 + np.log(safety) / eta,
                  T_position=T2, A=A, zeta=Z, zeta_grad=Zg, zeta_lap=Zl, a=a, b=b, c=c, L=L, M=M)
    return consts, audit


def build_growing_pair(ledger: ConstantsLedger, pq: PQFunctions, zeta: ZetaField, front: FrontProfile,
                       delta: Optional[float] = None, w_const: Optional[float] = None, T: Optional[float] = None,
                       safety: float = SAFETY, grid=None, window: float = 20.0) -> BarrierPair:
    """Ordered pair below/above the entire solution for ``t <= T``."""
    consts, audit = growing_pair_constants(ledger, pq, zeta, front, safety, grid)
    if delta is not None:
        if not 0 < delta <= consts["delta"]:
            raise VerifierError(f"constraint-violation: delta bound (0 < delta <= 2 eps0 / q_low = {consts['delta']:.4g}); "
                                f"got {delta}")
        consts["delta"] = _audit(audit, "delta", delta, "config")
        consts["A"] = 2.0 * ledger.a * delta / pq.pf.qstar_low
    if w_const is not None:
        if w_const < consts["w_min"]:
            raise VerifierError(f"constraint-violation: shift-speed bound needs w >= {consts['w_min']:.4g}; got {w_const}")
        consts["w"] = _audit(audit, "w", w_const, "config")
    if T is not None:
        eta = consts["eta"]
        Z, a, ql, qh, M, kappa = consts["zeta"], ledger.a, pq.pf.qstar_low, pq.pf.qstar_high, pq.M, consts["kappa"]
        E = min(1.0 / consts["w"], ql**2 / (2 * a * qh * Z), kappa * ql / (4 * a * consts["delta"] * M * Z))
        if not np.exp(eta * T) < E:
            raise VerifierError(f"constraint-violation: start-time bound needs exp(eta T) < {E:.4g}; got T={T}")
        if T > consts["T_position"]:
            raise VerifierError(f"constraint-violation: start-time bound needs T <= {consts['T_position']:.4g}; got T={T}")
        consts["T"] = _audit(audit, "T", T, "config")
    c, w, eta, A = consts["c"], consts["w"], consts["eta"], consts["A"]
    t_range = (consts["T"] - window / eta, consts["T"])
    common = dict(front=front, pq=pq, zeta=zeta, rate=eta, t_range=t_range, constants=consts, audit=audit)
    upper = CandidateFunction(name="growing-upper", kind="super", phase=PlanarPhase(c=c, amp=w, rate=eta), amp=A,
                              clip="upper", **common)
    lower = CandidateFunction(name="growing-lower", kind="sub", phase=PlanarPhase(c=c, amp=-w, rate=eta), amp=-A,
                              clip="lower", **common)
    L = consts["L"]
    win = (-consts["C"] - 10.0, consts["C"] + 10.0)
    near = 3.0 * L + 2.0
    region = _planar_region([upper, lower], win, t_range, zeta.obstacle, near, near)
    upper = _with_region(upper, region)
    lower = _with_region(lower, region)
    return BarrierPair(lower, upper, consts, audit)


def _with_region(cand: CandidateFunction, region) -> CandidateFunction:
    from dataclasses import replace

    return replace(cand, region=region)


def decaying_pair_constants(ledger: ConstantsLedger, pq: PQFunctions, zeta: ZetaField, front: FrontProfile,
                            safety: float = SAFETY, grid=None) -> tuple[dict, list]:
    """Constants of the decaying pair ``Phi(x1 + c(t+T) -+ rho delta (1 - e^{-beta t})) -+ padding``, ``t >= 0``."""
    _need_front(ledger)
    audit = []
    ql, qh = pq.pf.qstar_low, pq.pf.qstar_high
    a, b, c, L = ledger.a, ledger.b, ledger.c, ledger.L
    Dbar, M, Lam = ledger.Dbar, pq.M, ledger.Lambda
    nz = _zeta_norms(zeta, grid)
    Z, Zg, Zl = nz["zeta"], nz["grad"], nz["lap"]
    d1 = _audit(audit, "delta1", 2.0 * ledger.eps0 / safety, "delta1 < 2 eps0")
    delta = _audit(audit, "delta", min(1.0, d1 / (qh * Z)) / safety, "delta < min(1, delta1 / (q_high |zeta|))")
    beta = _audit(audit, "beta", min(delta, b * c, ledger.varpi / 2.0) / safety, "beta < min(delta, bc, varpi/2)")
    C = _audit(audit, "C", level_threshold(front, d1), "Phi within delta1 of 0 / 1 beyond -C / C")
    kappa = _audit(audit, "kappa", min_slope(front, C), "min of Phi' on [-C, C]")
    rho = _audit(audit, "rho", safety * ((beta * qh + c * M + Lam * qh + Dbar * M) * Z + Dbar * qh * Zl
                                         + 2 * Dbar * M * Zg) / (beta * kappa),
                 f"shift bound: beta rho kappa dominates the padding terms (x{safety:g})")
    Tstar = max((1.0 + rho + L) / c, (L + rho + np.log(a / (delta * ql)) / b) / c)
    _audit(audit, "T*", Tstar, "front clear of the obstacle and tail below delta q_low there")
    T = _audit(audit, "T", safety * Tstar, f"T >= T* (x{safety:g})")
    consts = dict(delta1=d1, delta=delta, beta=beta, C=C, kappa=kappa, rho=rho, Tstar=Tstar, T=T, zeta=Z,
                  zeta_grad=Zg, zeta_lap=Zl, a=a, b=b, c=c, L=L, M=M)
    return consts, audit


def build_decaying_pair(ledger: ConstantsLedger, pq: PQFunctions, zeta: ZetaField, front: FrontProfile,
                        safety: float = SAFETY, grid=None, t_end: float = 20.0) -> BarrierPair:
    """Pair trapping the solution after the front has crossed the obstacle, valid for ``t >= 0``."""
    consts, audit = decaying_pair_constants(ledger, pq, zeta, front, safety, grid)
    c, T, rho, delta, beta = consts["c"], consts["T"], consts["rho"], consts["delta"], consts["beta"]
    common = dict(front=front, pq=pq, zeta=zeta, rate=-beta, t_range=(0.0, t_end), constants=consts, audit=audit)
    # rho delta (1 - e^{-beta t}) = -rho delta (e^{-beta t} - 1)
    lower = CandidateFunction(name="decaying-lower", kind="sub",
                              phase=PlanarPhase(c=c, offset=c * T, amp=rho * delta, rate=-beta, base=1.0),
                              amp=-delta, **common)
    upper = CandidateFunction(name="decaying-upper", kind="super",
                              phase=PlanarPhase(c=c, offset=c * T, amp=-rho * delta, rate=-beta, base=1.0),
                              amp=delta, **common)
    L = consts["L"]
    win = (-consts["C"] - 10.0, consts["C"] + 10.0)
    near = 3.0 * L + 2.0
    region = _planar_region([upper, lower], win, (0.0, t_end), zeta.obstacle, near, near, seed_offset=7)
    return BarrierPair(_with_region(lower, region), _with_region(upper, region), consts, audit)


def key_subsolution_constants(ledger: ConstantsLedger, pq: PQFunctions, zeta: ZetaField, front: FrontProfile,
                              mu: Optional[float] = None, target_radius: Optional[float] = None,
                              safety: float = SAFETY, grid=None) -> tuple[dict, list, HProfile]:
    _need_front(ledger)
    audit = []
    ql, qh = pq.pf.qstar_low, pq.pf.qstar_high
    c, Dbar, M, Lam = ledger.c, ledger.Dbar, pq.M, ledger.Lambda
    nz = _zeta_norms(zeta, grid)
    Z, Zg, Zl = nz["zeta"], nz["grad"], nz["lap"]
    delta = _audit(audit, "delta", min(2 * ledger.eps0 / (qh * Z), ledger.varpi / 2.0, 1.0) / safety,
                   "delta < min(2 eps0 / (q_high |zeta|), varpi/2, 1)")
    C1 = _audit(audit, "C1", level_threshold(front, delta * ql, concave=True),
                "Phi within delta q_low of 0 / 1 beyond -C1 / C1 and concave above C1")
    C2 = _audit(audit, "C2", level_threshold(front, 0.5 * delta * ql), "Phi within delta q_low / 2 of 0 / 1 beyond -C2 / C2")
    kappa = _audit(audit, "kappa", min_slope(front, C1), "min of Phi' on [-C1, C1]")
    w = _audit(audit, "w", safety * ((Lam + 1) * qh * Z + (c + Dbar) * M * Z + 2 * Dbar * M * Zg + Dbar * qh * Zl) / kappa,
               f"shift bound: w kappa dominates the padding terms (x{safety:g})")
    mu_max = c / (4.0 * Dbar)
    if mu is None:
        mu = mu_max
    elif mu > mu_max:
        raise VerifierError(f"constraint-violation: mu <= c / (4 Dbar) = {mu_max:.4g}; got {mu}")
    _audit(audit, "mu", mu, "c / (4 Dbar)")
    hp = build_h_profile(mu)
    H, h0 = _audit(audit, "H", hp.H, "smallest ramp end with h'/r + h'' <= mu/2"), hp.h0
    _audit(audit, "h(0)", h0, "(H + r0) / 2")
    Tt = _audit(audit, "T_tilde", safety * 4.0 / (3.0 * c) * (C1 + C2 + h0 + w + 1.0),
                f"expansion time: (3/4) c T covers C1 + C2 + h(0) + w + 1 (x{safety:g})")
    Lr = ledger.L if target_radius is None else float(target_radius)
    R1 = _audit(audit, "R1", w + H + C1 + C2, "initial support radius")
    R2 = _audit(audit, "R2", 0.75 * c * Tt + H - h0, "radius reached near 1 at T_tilde")
    if not R1 < R2:
        raise VerifierError(f"constraint-violation: radius ordering needs R1 < R2 ({R1:.4g} vs {R2:.4g})")
    R3 = _audit(audit, "R3", max(R1 + Lr, R2, w + H + C1 + C2 + Lr + c * Tt), "ball radius contained in the domain")
    consts = dict(delta=delta, C1=C1, C2=C2, kappa=kappa, w=w, mu=mu, H=H, h0=h0, r0=hp.r0, T_tilde=Tt, R1=R1, R2=R2,
                  R3=R3, zeta=Z, zeta_grad=Zg, zeta_lap=Zl, c=c, M=M, target_radius=Lr)
    return consts, audit, hp


def build_key_subsolution(ledger: ConstantsLedger, pq: PQFunctions, zeta: ZetaField, front: FrontProfile,
                          delta: Optional[float] = None, x0=None, mu: Optional[float] = None,
                          target_radius: Optional[float] = None, safety: float = SAFETY, grid=None) -> CandidateFunction:
    """Radially expanding subsolution ``max(Phi(xi) - delta Q(xi) zeta e^{-delta t}, 0)`` on ``[0, T_tilde]``."""
    consts, audit, hp = key_subsolution_constants(ledger, pq, zeta, front, mu, target_radius, safety, grid)
    if delta is not None:
        if not 0 < delta <= consts["delta"] * safety:
            raise VerifierError(f"constraint-violation: delta bound needs delta < {consts['delta'] * safety:.4g}; got {delta}")
        consts["delta"] = _audit(audit, "delta", delta, "config")
    obs = zeta.obstacle
    R3 = consts["R3"]
    Lk = obs.bound_radius + (0.0 if obs.empty else float(np.linalg.norm(obs.center)))
    if x0 is None:
        x0 = np.array([R3 + Lk + 1.0, 0.0])
    x0 = np.asarray(x0, float)
    if not obs.empty and np.linalg.norm(x0) - Lk < R3:
        raise VerifierError(f"constraint-violation: ball B(x0, R3={R3:.4g}) meets the obstacle")
    consts["x0"] = [float(x0[0]), float(x0[1])]
    c, w, H, C1, Tt, d = consts["c"], consts["w"], consts["H"], consts["C1"], consts["T_tilde"], consts["delta"]
    phase = RadialPhase(hprof=hp, speed=0.75 * c, w=w, decay=d, shift=H + C1)
    cand = CandidateFunction(name="expanding-sub", kind="sub", front=front, phase=phase, pq=pq, zeta=zeta, amp=-d,
                             rate=-d, clip="lower", origin=x0, t_range=(0.0, Tt), constants=consts, audit=audit)
    C2 = consts["C2"]

    def region(n, seed):
        rng = np.random.default_rng(seed + 11)
        n_front, n_in = n // 2, n // 4
        n_far = n - n_front - n_in
        # front zone: radii where xi lies in [-C2 - 5, C2 + 5]
        t = rng.uniform(0.0, Tt, n_front)
        target = rng.uniform(-C2 - 5.0, C2 + 5.0, n_front)
        r = 0.75 * c * t + w * np.exp(-d * t) + H + C1 - target
        r = np.where(r >= H, r, rng.uniform(0, H, n_front))
        th = rng.uniform(0, 2 * np.pi, n_front)
        X1 = r * np.stack([np.cos(th), np.sin(th)])
        # core of the ball, where the ramp of h is active
        t2 = rng.uniform(0.0, Tt, n_in)
        r2 = rng.uniform(0.0, 1.5 * H, n_in)
        th2 = rng.uniform(0, 2 * np.pi, n_in)
        X2 = r2 * np.stack([np.cos(th2), np.sin(th2)])
        # neighbourhood of the obstacle (the candidate should vanish there)
        t3 = rng.uniform(0.0, Tt, n_far)
        near = 3.0 * max(Lk, 1.0)
        X3 = _fluid_points(obs, (-near, -near), (near, near), n_far, rng, x0)
        reg = SampleRegion(np.concatenate([t, t2, t3]), np.concatenate([X1, X2, X3], axis=1))
        Pb, nub = boundary_samples(obs, 360)
        if Pb.shape[1]:
            tb = rng.uniform(0.0, Tt, Pb.shape[1])
            reg = merge_regions(reg, SampleRegion(np.zeros(0), np.zeros((2, 0)), tb, Pb - x0[:, None], nub))
        return reg

    return _with_region(cand, region)


# ------------------------------------------------------------- utilities


def pair_ordering(pair: BarrierPair, region: Optional[SampleRegion] = None, n: int = 20_000, seed: int = 0) -> float:
    """Largest value of ``lower - upper`` over the samples (should be <= 0)."""
    region = pair.region(n, seed) if region is None else region
    return float(np.max(pair.lower(region.t, region.X) - pair.upper(region.t, region.X)))


def supersolution_evaluator(pair: BarrierPair) -> Callable:
    """``(t, xy) -> (m, N)`` upper barrier, usable as initial data for the entire-solution scheme."""
    return lambda t, xy: pair.upper(np.full(xy.shape[1], t), xy)
