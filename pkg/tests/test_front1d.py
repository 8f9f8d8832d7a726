from __future__ import annotations

import numpy as np
import pytest

from bistable_obstacle.errors import FrontError
from bistable_obstacle.front1d import (
    FrontProfile,
    interpolant_residual,
    parabolic_drift,
    solve_halfline_ground_state,
    solve_planar_front,
)
from bistable_obstacle.systems import cubic_pair

from conftest import SQRT2, cubic_front_exact

C_EXACT = (1 - 2 * 0.25) / SQRT2


def test_cubic_speed_and_profile(cubic_front):
    # [DERIVED] closed-form front by substitution
    assert abs(cubic_front.c - C_EXACT) / C_EXACT <= 1e-3
    err = np.abs(cubic_front.values - cubic_front_exact(cubic_front.xi)).max()
    assert err <= 1e-4
    assert cubic_front.level_position() == pytest.approx(0.0, abs=1e-9)


def test_refinement_order(cubic):
    errs = [abs(solve_planar_front(cubic, half_width=20.0, h=h).c - C_EXACT) for h in (0.2, 0.1)]
    assert np.log2(errs[0] / errs[1]) >= 1.8


def test_profile_monotone_and_bounded(cubic_front):
    assert np.all(np.diff(cubic_front.values, axis=1) >= -1e-12)
    assert cubic_front.values.min() >= 0.0 and cubic_front.values.max() <= 1.0


def test_interpolant_is_accurate_between_nodes(cubic, cubic_front):
    assert interpolant_residual(cubic, cubic_front) <= 1e-6
    s = np.linspace(-10, 10, 1001) + 0.013
    np.testing.assert_allclose(cubic_front(s), np.broadcast_to(cubic_front_exact(s), (2, s.size)), atol=1e-4)


def test_interpolant_saturates_outside_grid(cubic_front):
    np.testing.assert_array_equal(cubic_front(np.array([-100.0, 100.0])), [[0.0, 1.0], [0.0, 1.0]])
    np.testing.assert_array_equal(cubic_front(np.array([-100.0, 100.0]), order=1), [[0.0, 0.0], [0.0, 0.0]])


def test_shift_equivariance(cubic):
    p0 = solve_planar_front(cubic, half_width=20.0, h=0.1)
    p1 = solve_planar_front(cubic, half_width=20.0, h=0.1, init_shift=3.0)
    assert p1.c == pytest.approx(p0.c, rel=1e-6)
    np.testing.assert_allclose(p1.values, p0.values, atol=1e-6)


def test_parabolic_drift_brackets_speed(cubic, cubic_front):
    c = cubic_front.c
    assert abs(parabolic_drift(cubic, cubic_front, c)) <= 0.05 * c
    # a frame moving at the wrong speed sees the level drift at the speed difference
    for f in (0.5, 1.5):
        assert parabolic_drift(cubic, cubic_front, f * c) == pytest.approx(abs(1 - f) * c, rel=0.05)


def test_decay_constants(cubic_decay):
    # [DERIVED] closed-form tail exponent 1/sqrt(2)
    assert abs(cubic_decay.b - 1 / SQRT2) / (1 / SQRT2) <= 0.03
    assert cubic_decay.envelope_ok and cubic_decay.impo_ok
    # [DERIVED] Phi'' = (1 - 2 Phi) Phi' / sqrt(2): sign change at the half level
    assert abs(cubic_decay.Cconc) <= 0.1


def test_derivative_ratio_bound_holds_pointwise(cubic_front, cubic_decay):
    inner = np.abs(cubic_front.xi) <= 0.9 * cubic_front.half_width
    d1, d2 = cubic_front.deriv[:, inner], cubic_front.deriv2[:, inner]
    ok = d1 > 1e-11
    assert np.all(np.abs(d2[ok]) <= cubic_decay.Kbar1 * d1[ok] * (1 + 1e-12))
    # [DERIVED] |Phi''/Phi'| = |1 - 2 Phi| / sqrt 2 <= 1/sqrt 2
    assert cubic_decay.Kbar1 == pytest.approx(1 / SQRT2, rel=0.03)


def test_text_round_trip(cubic_front):
    txt = cubic_front.to_text()
    back = FrontProfile.from_text(txt, cubic_front.D)
    assert back.c == cubic_front.c
    np.testing.assert_array_equal(back.values, cubic_front.values)


def test_bad_grid_rejected(cubic):
    with pytest.raises(FrontError):
        solve_planar_front(cubic, half_width=1.0, h=0.7)


def test_halfline_ground_state(cubic, cubic_front):
    hl = solve_halfline_ground_state(cubic, cubic_front, half_width=40.0)
    U = hl.values
    assert np.all(U[:, 0] == 0.0)
    assert np.all(np.diff(U, axis=1) > 0)
    assert U[:, -1].min() >= 0.999
    assert hl.residual <= 1e-6
    # iterates increase in time
    assert np.all(np.diff(hl.snapshots, axis=0) >= -1e-12)


def test_halfline_lv(lv_asym):
    front = solve_planar_front(lv_asym, half_width=40.0, h=0.05)
    assert front.c > 0
    hl = solve_halfline_ground_state(lv_asym, front, half_width=40.0)
    np.testing.assert_array_equal(hl.values[:, 0], [0.0, 0.0])
    assert np.all(np.diff(hl.values, axis=1) >= 0)


def test_lv_symmetric_speed_zero():
    from bistable_obstacle.lotka import LVParams, lv_system

    prof = solve_planar_front(lv_system(LVParams(2.0, 2.0, 1.0, 1.0)), half_width=40.0, h=0.05)
    assert abs(prof.c) <= 1e-3


def test_weaker_cubic_is_slower():
    fast = solve_planar_front(cubic_pair(0.2), half_width=20.0, h=0.1).c
    slow = solve_planar_front(cubic_pair(0.4), half_width=20.0, h=0.1).c
    assert fast > slow > 0
    assert slow == pytest.approx((1 - 0.8) / SQRT2, rel=5e-3)
