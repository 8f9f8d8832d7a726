from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bistable_obstacle.errors import LotkaError
from bistable_obstacle.lotka import LVParams, lv_speed_conditions, lv_system, lv_transform


def test_transform_maps_competitive_equilibria():
    # [PAPER] (0,1) -> (0,0) and (1,0) -> (1,1)
    np.testing.assert_array_equal(lv_transform(np.array([0.0, 1.0])), [0.0, 0.0])
    np.testing.assert_array_equal(lv_transform(np.array([1.0, 0.0])), [1.0, 1.0])


@settings(max_examples=50, deadline=None)
@given(st.floats(0, 1), st.floats(0, 1))
def test_transform_is_involution(a, b):
    u = np.array([a, b])
    np.testing.assert_allclose(lv_transform(lv_transform(u)), u, atol=1e-15)


@settings(max_examples=50, deadline=None)
@given(st.floats(0, 1), st.floats(0, 1), st.floats(0, 1), st.floats(0, 1))
def test_transform_reverses_order_of_second_species(a1, b1, a2, b2):
    u, v = np.array([a1, min(b1, b2)]), np.array([a2, max(b1, b2)])
    assert lv_transform(u)[1] >= lv_transform(v)[1]


def test_cooperative_frame_matches_competitive_model():
    # competitive model u1' = u1(1 - u1 - k1 u2), u2' = r u2 (1 - u2 - k2 u1)
    p = LVParams(1.3, 2.4, 0.8, 1.0)
    sys = lv_system(p)
    rng = np.random.default_rng(1)
    w = rng.random((2, 50))
    comp = np.stack([w[0] * (1 - w[0] - p.k1 * w[1]), p.r * w[1] * (1 - w[1] - p.k2 * w[0])])
    coop = sys.F(lv_transform(w))
    np.testing.assert_allclose(coop[0], comp[0], atol=1e-14)
    np.testing.assert_allclose(coop[1], -comp[1], atol=1e-14)


def test_p2_examples():
    # [DERIVED] (1 + 0.1)/2 = 0.55 < 3 - 2.2 = 0.8
    assert lv_speed_conditions(LVParams(1.1, 2.0, 1.0, 1.0))["P2"]
    # [DERIVED] 3 - 2 k1 = -1 < 0
    cond = lv_speed_conditions(LVParams(2.0, 2.0, 1.0, 1.0))
    assert not cond["P2"]
    assert not cond["any"]


def test_invalid_parameters():
    with pytest.raises(LotkaError, match="invalid-params"):
        LVParams(0.9, 2.0)
    with pytest.raises(LotkaError, match="invalid-params"):
        LVParams(1.5, 2.0, r=0.0)


def test_condition_witness_is_reported():
    cond = lv_speed_conditions(LVParams(1.1, 2.0, 1.0, 1.0))
    assert set(cond) >= {"P1", "P2", "P3", "P4", "P3_n", "any"}
    if cond["P3"]:
        assert cond["P3_n"] >= 2
