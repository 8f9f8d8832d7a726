"""Two-species Lotka-Volterra competition in its cooperative frame.

The competitive model ``(u1, u2)`` becomes cooperative after flipping the
second species, ``u2 -> 1 - u2``.  In that frame the stable states (0, 1)
and (1, 0) become the ordered pair 0 and 1, and closed-form Perron-Frobenius
data are available.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import LotkaError
from .systems import PFHint, SystemDef

P3_NMAX = 64


@dataclass(frozen=True)
class LVParams:
    k1: float
    k2: float
    r: float = 1.0
    d: float = 1.0

    def __post_init__(self):
        if not (self.k1 > 1 and self.k2 > 1):
            raise LotkaError(f"invalid-params: need k1 > 1 and k2 > 1, got k1={self.k1}, k2={self.k2}")
        if not (self.r > 0 and self.d > 0):
            raise LotkaError(f"invalid-params: need r > 0 and d > 0, got r={self.r}, d={self.d}")


def lv_pf_hint(p: LVParams) -> PFHint:
    return PFHint(
        R0=np.array([1.0, 2.0 * p.k2]),
        R1=np.array([2.0 * p.k1, 1.0]),
        lambda0=0.5 * min(p.r / 2.0, p.k1 - 1.0),
        lambda1=0.5 * min(0.5, p.r * (p.k2 - 1.0)),
        source="closed form for the cooperative LV frame",
    )


def lv_system(p: LVParams) -> SystemDef:
    k1, k2, r = p.k1, p.k2, p.r

    def F(u):
        u1, u2 = u[0], u[1]
        return np.stack([u1 * (1.0 - k1 - u1 + k1 * u2), r * (1.0 - u2) * (k2 * u1 - u2)])

    def jac(u):
        u1, u2 = u[0], u[1]
        J = np.empty((2, 2) + u1.shape)
        J[0, 0] = 1.0 - k1 - 2.0 * u1 + k1 * u2
        J[0, 1] = k1 * u1
        J[1, 0] = r * k2 * (1.0 - u2)
        J[1, 1] = r * (-(k2 * u1 - u2) - (1.0 - u2))
        return J

    return SystemDef(
        m=2,
        D=np.array([1.0, p.d]),
        F=F,
        jac=jac,
        name=f"lv(k1={k1}, k2={k2}, r={r}, d={p.d})",
        pf_hint=lv_pf_hint(p),
        params={"k1": k1, "k2": k2, "r": r, "d": p.d},
    )


def lv_transform(u) -> np.ndarray:
    """Competitive <-> cooperative frame; the map is its own inverse."""
    u = np.asarray(u, dtype=float)
    out = u.copy()
    out[1] = 1.0 - u[1]
    return out


lv_inverse_transform = lv_transform


def _p3_window(p: LVParams, n: int) -> bool:
    k1, k2, r, d = p.k1, p.k2, p.r, p.d
    if not 1 < k1 < 1 + n / ((n - 1) * (2 * n - 1)):
        return False
    base = d * (k1 - 1) * (n - 1) ** 2 / n**2
    return (2 * base / k2 < r < base) or (base / k2 < r < 2 * base)


def lv_speed_conditions(p: LVParams, n_max: int = P3_NMAX) -> dict:
    """Sufficient conditions for a positive front speed, evaluated literally."""
    k1, k2, r, d = p.k1, p.k2, p.r, p.d
    denom = d - r * (k2 - 1)
    p1 = denom > 0 and 1 < d * k1 / denom < 2 * (k2 - 1) / k2
    p2 = (r + d * (k1 - 1)) / (k2 * r) < 3 - 2 * k1
    witness = None
    if k2 > 2:
        for n in range(2, n_max + 1):
            if _p3_window(p, n):
                witness = n
                break
    p3 = witness is not None
    p4 = (2 * r + 4 * d * (k1 - 1)) / (r * k2) < 3 - k1
    out = {"P1": bool(p1), "P2": bool(p2), "P3": bool(p3), "P4": bool(p4), "P3_n": witness}
    out["any"] = bool(p1 or p2 or p3 or p4)
    return out
