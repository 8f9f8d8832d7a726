"""Cooperative bistable vector fields and their structural constants.

A system is ``u_t = D Δu + F(u)`` with ``F: [0,1]^m -> R^m`` cooperative and
bistable between ``0`` and ``1``.  This module evaluates ``F`` and its
Jacobian, audits the structural assumptions (diffusion positive, both
equilibria linearly stable, Perron-Frobenius directions, quasi-monotone
off-diagonals) and derives the constants that the barrier constructions in
:mod:`bistable_obstacle.verifier` consume.

Fields act on arrays of shape ``(m, ...)`` and return the same shape; a
Jacobian evaluator returns ``(m, m, ...)``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import AssumptionError, DomainViolation, SystemsError

FieldFn = Callable[[np.ndarray], np.ndarray]

_FD_STEP = 1e-6


@dataclass(frozen=True)
class PFHint:
    """Perron-Frobenius data supplied from outside (e.g. closed forms)."""

    R0: Optional[np.ndarray] = None
    R1: Optional[np.ndarray] = None
    lambda0: Optional[float] = None
    lambda1: Optional[float] = None
    source: str = "config"


@dataclass(frozen=True, eq=False)
class SystemDef:
    m: int
    D: np.ndarray
    F: FieldFn
    jac: Optional[FieldFn] = None
    name: str = "system"
    # admissible open box around [0,1]^m; states outside signal an overshoot
    box: tuple[float, float] = (-0.5, 1.5)
    pf_hint: Optional[PFHint] = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        D = np.asarray(self.D, dtype=float).reshape(-1)
        if D.size != self.m:
            raise SystemsError(f"D has {D.size} entries, expected m={self.m}")
        object.__setattr__(self, "D", D)

    @property
    def Dbar(self) -> float:
        return float(self.D.max())

    @property
    def Dunder(self) -> float:
        return float(self.D.min())


def _as_state(sys: SystemDef, u) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.shape[0] != sys.m:
        raise SystemsError(f"state has leading size {u.shape[0]}, expected {sys.m}")
    return u


def eval_field(sys: SystemDef, u) -> np.ndarray:
    """F(u) with an admissibility check on the state."""
    u = _as_state(sys, u)
    lo, hi = sys.box
    if np.any(u < lo) or np.any(u > hi) or np.any(~np.isfinite(u)):
        bad = np.argwhere((u < lo) | (u > hi) | ~np.isfinite(u))[0]
        raise DomainViolation(f"state {u[(slice(None),) + tuple(bad[1:])]} outside admissible box {sys.box}")
    return np.asarray(sys.F(u), dtype=float)


def jacobian(sys: SystemDef, u) -> np.ndarray:
    """F'(u); analytic when the system provides it, central differences otherwise."""
    u = _as_state(sys, u)
    eval_field(sys, u)
    if sys.jac is not None:
        return np.asarray(sys.jac(u), dtype=float)
    return fd_jacobian(sys, u)


def fd_jacobian(sys: SystemDef, u, step: float = _FD_STEP) -> np.ndarray:
    u = _as_state(sys, u)
    cols = []
    for j in range(sys.m):
        e = np.zeros((sys.m,) + (1,) * (u.ndim - 1))
        e[j] = step
        cols.append((sys.F(u + e) - sys.F(u - e)) / (2 * step))
    return np.stack(cols, axis=1)


# ---------------------------------------------------------------- built-ins


def cubic_pair(a: float = 0.25, m: int = 2, D: Sequence[float] | None = None) -> SystemDef:
    """Decoupled copies of the cubic ``u(1-u)(u-a)``."""
    if not 0.0 < a < 1.0:
        raise SystemsError("cubic threshold a must lie in (0, 1)")

    def F(u):
        return u * (1.0 - u) * (u - a)

    def jac(u):
        d = -3.0 * u**2 + 2.0 * (1.0 + a) * u - a
        J = np.zeros((m, m) + u.shape[1:])
        for i in range(m):
            J[i, i] = d[i]
        return J

    return SystemDef(
        m=m,
        D=np.ones(m) if D is None else np.asarray(D, float),
        F=F,
        jac=jac,
        name=f"cubic_pair(a={a})",
        pf_hint=PFHint(R0=np.ones(m), R1=np.ones(m), source="decoupled: unit vectors"),
        params={"a": a},
    )


def polynomial_system(terms: Sequence[Sequence[tuple[float, Sequence[int]]]], D, name="polynomial") -> SystemDef:
    """Field given by ``F_i(u) = sum_k coef_k prod_j u_j^{p_kj}``.

    ``terms[i]`` lists ``(coef, powers)`` pairs for component ``i``.
    """
    m = len(terms)
    table = []
    for comp in terms:
        rows = []
        for coef, powers in comp:
            powers = tuple(int(p) for p in powers)
            if len(powers) != m or min(powers) < 0:
                raise SystemsError(f"bad monomial powers {powers} for m={m}")
            rows.append((float(coef), powers))
        table.append(rows)

    def monomial(u, powers):
        out = np.ones(u.shape[1:])
        for j, p in enumerate(powers):
            if p:
                out = out * u[j] ** p
        return out

    def F(u):
        return np.stack([sum((c * monomial(u, p) for c, p in comp), np.zeros(u.shape[1:])) for comp in table])

    def jac(u):
        J = np.zeros((m, m) + u.shape[1:])
        for i, comp in enumerate(table):
            for c, p in comp:
                for j in range(m):
                    if p[j] == 0:
                        continue
                    q = list(p)
                    q[j] -= 1
                    J[i, j] += c * p[j] * monomial(u, q)
        return J

    return SystemDef(m=m, D=np.asarray(D, float), F=F, jac=jac, name=name, params={"terms": table})


# ----------------------------------------------------------- PF apparatus


def smoothstep(s):
    """Quintic C^2 cutoff: 0 on (-inf, 0], 1 on [1, inf), increasing between."""
    s = np.clip(s, 0.0, 1.0)
    return s**3 * (s * (6.0 * s - 15.0) + 10.0)


def smoothstep_d1(s):
    inside = (s > 0.0) & (s < 1.0)
    s = np.clip(s, 0.0, 1.0)
    return np.where(inside, 30.0 * s**2 * (s - 1.0) ** 2, 0.0)


def smoothstep_d2(s):
    inside = (s > 0.0) & (s < 1.0)
    s = np.clip(s, 0.0, 1.0)
    return np.where(inside, 60.0 * s * (s - 1.0) * (2.0 * s - 1.0), 0.0)


@dataclass(frozen=True, eq=False)
class PFData:
    R0: np.ndarray
    R1: np.ndarray
    lambda0: float
    lambda1: float
    eta0: float
    eta1: float
    source: str = "computed"

    @property
    def P0(self):
        return self.eta0 * self.R0

    @property
    def P1(self):
        return self.R1

    @property
    def Q0(self):
        return self.R0

    @property
    def Q1(self):
        return self.eta1 * self.R1

    @property
    def pstar_low(self) -> float:
        return float(self.P0.min())

    @property
    def pstar_high(self) -> float:
        return float(self.P1.max())

    @property
    def qstar_low(self) -> float:
        return float(self.Q1.min())

    @property
    def qstar_high(self) -> float:
        return float(self.Q0.max())


@dataclass(frozen=True, eq=False)
class PQFunctions:
    """Interpolants ``P(s)`` and ``Q(s)`` between the PF endpoint vectors."""

    pf: PFData
    M: float

    @staticmethod
    def chi(s):
        return smoothstep(s)

    def _blend(self, lo, hi, s, order):
        s = np.asarray(s, dtype=float)
        k = (smoothstep, smoothstep_d1, smoothstep_d2)[order](s)
        base = lo if order == 0 else np.zeros_like(lo)
        shape = (-1,) + (1,) * s.ndim
        return base.reshape(shape) + (hi - lo).reshape(shape) * k

    def p(self, s, order: int = 0):
        return self._blend(self.pf.P0, self.pf.P1, s, order)

    def q(self, s, order: int = 0):
        return self._blend(self.pf.Q0, self.pf.Q1, s, order)


def _chi_derivative_bound() -> float:
    s = np.linspace(0.0, 1.0, 20001)
    return float(np.max(np.abs(smoothstep_d1(s)) + np.abs(smoothstep_d2(s))))


def build_pq(pf: PFData) -> PQFunctions:
    """Interpolants of the PF directions; raises if the scalings are not admissible."""
    if not np.all(pf.eta0 * pf.R0 < pf.R1):
        raise SystemsError(f"scaling-failure: eta0*R0 = {pf.eta0 * pf.R0} is not << R1 = {pf.R1}")
    if not np.all(pf.eta1 * pf.R1 < pf.R0):
        raise SystemsError(f"scaling-failure: eta1*R1 = {pf.eta1 * pf.R1} is not << R0 = {pf.R0}")
    spread = np.abs(pf.P1 - pf.P0) + np.abs(pf.Q1 - pf.Q0)
    M = _chi_derivative_bound() * float(spread.max())
    return PQFunctions(pf=pf, M=M)


def default_eta(Ra: np.ndarray, Rb: np.ndarray) -> float:
    """Half of the largest eta with ``eta * Ra << Rb``."""
    return 0.5 * float(np.min(Rb / Ra))


# ------------------------------------------------------------------ audit


@dataclass(frozen=True, eq=False)
class ConstantsLedger:
    Lambda: float
    Lambda_at: np.ndarray
    varpi: float
    eps0: float
    Dbar: float
    Dunder: float
    A0: np.ndarray
    A1: np.ndarray
    M: float
    a: Optional[float] = None
    b: Optional[float] = None
    c: Optional[float] = None
    L: Optional[float] = None
    provenance: dict = field(default_factory=dict)

    @property
    def eta(self) -> float:
        if self.b is None or self.c is None:
            raise SystemsError("eta needs front data (b, c); call with_front first")
        return min(self.b * self.c / 2.0, self.varpi / 2.0)

    def with_front(self, a: float, b: float, c: float) -> "ConstantsLedger":
        prov = dict(self.provenance, a="estimated: tail fit", b="estimated: tail fit", c="estimated: front solve",
                    eta="formula: min(bc/2, varpi/2)")
        return replace(self, a=float(a), b=float(b), c=float(c), provenance=prov)

    def with_obstacle(self, L: float) -> "ConstantsLedger":
        prov = dict(self.provenance, L="geometry: bounding radius")
        return replace(self, L=float(L), provenance=prov)

    def as_dict(self) -> dict:
        out = {k: getattr(self, k) for k in ("Lambda", "varpi", "eps0", "Dbar", "Dunder", "M", "a", "b", "c", "L")}
        if self.b is not None and self.c is not None:
            out["eta"] = self.eta
        out = {k: (None if v is None else float(v)) for k, v in out.items()}
        return {"values": out, "provenance": dict(self.provenance)}


@dataclass(frozen=True, eq=False)
class AssumptionReport:
    system: str
    a1_ok: bool
    eig0: np.ndarray
    eig1: np.ndarray
    abscissa0: float
    abscissa1: float
    pf: PFData
    a3_residual0: float
    a3_residual1: float
    a4_min_offdiag: float
    a4_argmin: Optional[np.ndarray]
    ledger: ConstantsLedger
    failures: tuple = ()

    @property
    def ok(self) -> bool:
        return not self.failures


def _lattice(m: int, n: int) -> np.ndarray:
    n = max(2, n)
    while n**m > 17**4 and n > 2:
        n -= 1
    axes = [np.linspace(0.0, 1.0, n)] * m
    return np.array(list(itertools.product(*axes))).T


def _pf_direction(J: np.ndarray, R: Optional[np.ndarray], lam: Optional[float], which: str):
    """Validated (R, lambda) with ``J R <= -lambda R``."""
    if R is None:
        w, V = np.linalg.eig(J)
        k = int(np.argmax(w.real))
        v = np.real(V[:, k])
        v = v * np.sign(v[np.argmax(np.abs(v))])
        if np.all(v > 1e-12):
            R = v / v.max()
        else:
            # stable Metzler matrix: -J is a nonsingular M-matrix, so -J^{-1} 1 > 0
            R = np.linalg.solve(-J, np.ones(J.shape[0]))
            R = R / R.max()
    R = np.asarray(R, float)
    if np.any(R <= 0):
        raise AssumptionError("A3", f"{which}: direction {R} is not positive")
    best = float(np.min(-(J @ R) / R))
    if lam is None:
        lam = best
    resid = float(np.max(J @ R + lam * R))
    if lam <= 0 or resid > 1e-10:
        raise AssumptionError("A3", f"{which}: J R + lambda R has max {resid:.3e} with lambda={lam}")
    return R, float(lam), resid


def _ball_samples(center, radius, n, rng, positive=True):
    m = center.size
    d = rng.normal(size=(n, m))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    r = radius * rng.random(n) ** (1.0 / m)
    pts = center + d * r[:, None]
    pts = np.vstack([center, pts])
    if positive:
        pts = pts[np.all(pts > 0, axis=1)]
    return pts


def _mu_matrix(sys: SystemDef, equilibrium: np.ndarray, radius: float, rng, pad: float) -> np.ndarray:
    pts = _ball_samples(equilibrium, radius, 1000, rng, positive=False)
    pts = np.clip(pts, 0.0, 1.0).T
    J = jacobian(sys, pts)
    mu = J.max(axis=2) + pad
    off = ~np.eye(sys.m, dtype=bool)
    # strict irreducibility: keep off-diagonal bounds positive
    mu[off] = np.maximum(mu[off], pad)
    return mu


def _margin(mu: np.ndarray, centers, radius: float, rng) -> float:
    worst = np.inf
    for c in centers:
        w = _ball_samples(np.asarray(c, float), radius, 1000, rng)
        if w.size == 0:
            continue
        worst = min(worst, float(np.min(-(w @ mu.T) / w)))
    return worst


def audit_assumptions(
    sys: SystemDef,
    sampling: int = 17,
    R0=None,
    R1=None,
    lambda0=None,
    lambda1=None,
    eta0=None,
    eta1=None,
    seed: int = 0,
    strict: bool = True,
) -> AssumptionReport:
    """Check the structural assumptions and assemble PF data and the constants ledger."""
    if sampling < 2:
        raise SystemsError("sampling resolution must be >= 2 points per axis")
    rng = np.random.default_rng(seed)
    m = sys.m
    zero, one = np.zeros(m), np.ones(m)
    failures = []

    a1_ok = bool(np.all(sys.D > 0))
    if not a1_ok:
        failures.append(AssumptionError("A1", f"diffusion rates {sys.D} not all positive"))

    for eq_name, e in (("0", zero), ("1", one)):
        val = np.max(np.abs(eval_field(sys, e[:, None])))
        if val > 1e-12:
            failures.append(AssumptionError("A2", f"F({eq_name}) = {val:.3e} is not an equilibrium", point=e))

    J0 = jacobian(sys, zero[:, None])[:, :, 0]
    J1 = jacobian(sys, one[:, None])[:, :, 0]
    eig0, eig1 = np.linalg.eigvals(J0), np.linalg.eigvals(J1)
    s0, s1 = float(eig0.real.max()), float(eig1.real.max())
    for nm, s, e in (("0", s0, zero), ("1", s1, one)):
        if s >= 0:
            failures.append(AssumptionError("A2", f"equilibrium {nm} not stable (spectral abscissa {s:.4g})", point=e))

    # cooperativity on a lattice plus random points
    pts = np.hstack([_lattice(m, sampling), rng.random((m, 10000))])
    J = jacobian(sys, pts)
    off = ~np.eye(m, dtype=bool)
    offvals = J[off]
    a4_min = float(offvals.min()) if m > 1 else 0.0
    a4_arg = None
    if m > 1:
        k = np.unravel_index(np.argmin(offvals), offvals.shape)[1]
        a4_arg = pts[:, k]
        if a4_min < -1e-12:
            failures.append(AssumptionError("A4", f"off-diagonal Jacobian entry {a4_min:.4g} < 0", point=a4_arg))

    rowsum = np.abs(J).sum(axis=1)
    flat = np.argmax(rowsum.max(axis=0))
    Lambda = float(rowsum[:, flat].max())

    if strict and failures:
        raise failures[0]

    hint = sys.pf_hint or PFHint()
    R0 = hint.R0 if R0 is None else R0
    R1 = hint.R1 if R1 is None else R1
    lambda0 = hint.lambda0 if lambda0 is None else lambda0
    lambda1 = hint.lambda1 if lambda1 is None else lambda1
    pf_source = hint.source if (R0 is not None or R1 is not None) else "computed"
    try:
        R0, lambda0, res0 = _pf_direction(J0, R0, lambda0, "F'(0)")
        R1, lambda1, res1 = _pf_direction(J1, R1, lambda1, "F'(1)")
    except AssumptionError as exc:
        if strict:
            raise
        failures.append(exc)
        R0 = R1 = one
        lambda0 = lambda1 = float("nan")
        res0 = res1 = float("nan")

    eta0 = default_eta(R0, R1) if eta0 is None else float(eta0)
    eta1 = default_eta(R1, R0) if eta1 is None else float(eta1)
    pf = PFData(R0=R0, R1=R1, lambda0=lambda0, lambda1=lambda1, eta0=eta0, eta1=eta1, source=pf_source)
    pq = build_pq(pf)

    eps0, varpi, A0, A1 = _estimate_eps_varpi(sys, pf, rng)
    if varpi <= 0 and strict:
        raise AssumptionError("A3", "no neighbourhood radius gives a positive PF decay margin")
    prov = {
        "Lambda": f"estimated: lattice {sampling}^m + 1e4 random samples",
        "varpi": "estimated: halved sampled margin",
        "eps0": "estimated: halving search from min(p_*, q_*)/8",
        "Dbar": "formula: max D_i",
        "Dunder": "formula: min D_i",
        "M": "formula: sup(|chi'|+|chi''|) * max_i spread",
    }
    ledger = ConstantsLedger(
        Lambda=Lambda, Lambda_at=pts[:, flat], varpi=varpi, eps0=eps0, Dbar=sys.Dbar, Dunder=sys.Dunder,
        A0=A0, A1=A1, M=pq.M, provenance=prov,
    )
    return AssumptionReport(
        system=sys.name, a1_ok=a1_ok, eig0=eig0, eig1=eig1, abscissa0=s0, abscissa1=s1, pf=pf,
        a3_residual0=res0, a3_residual1=res1, a4_min_offdiag=a4_min, a4_argmin=a4_arg, ledger=ledger,
        failures=tuple(failures),
    )


def _estimate_eps_varpi(sys: SystemDef, pf: PFData, rng, max_halvings: int = 12):
    """Largest eps0 on the halving ladder for which the local bounds hold."""
    eps = min(pf.pstar_low, pf.qstar_low) / 8.0
    one, zero = np.ones(sys.m), np.zeros(sys.m)
    for _ in range(max_halvings):
        pad = 1e-3 * min(pf.lambda0, pf.lambda1)
        A0 = _mu_matrix(sys, zero, 4 * eps, rng, pad)
        A1 = _mu_matrix(sys, one, 4 * eps, rng, pad)
        ok = (
            np.all(A0 @ pf.P0 < -0.5 * pf.lambda0 * pf.P0)
            and np.all(A0 @ pf.Q0 < -0.5 * pf.lambda0 * pf.Q0)
            and np.all(A1 @ pf.P1 < -0.5 * pf.lambda1 * pf.P1)
            and np.all(A1 @ pf.Q1 < -0.5 * pf.lambda1 * pf.Q1)
            and np.linalg.eigvals(A0).real.max() < 0
            and np.linalg.eigvals(A1).real.max() < 0
        )
        if ok:
            w0 = _margin(A0, (pf.P0, pf.Q0), 2 * eps, rng)
            w1 = _margin(A1, (pf.P1, pf.Q1), 2 * eps, rng)
            margin = min(w0, w1)
            if margin > 0:
                return eps, 0.5 * margin, A0, A1
        eps *= 0.5
    return eps, -1.0, A0, A1
