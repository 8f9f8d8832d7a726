from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bistable_obstacle.errors import GeometryError
from bistable_obstacle.geometry import (
    Obstacle,
    annulus_channel,
    build_zeta,
    crescent,
    disk,
    ellipse,
    is_directionally_convex,
    is_star_shaped,
    make_mask,
    no_obstacle,
    polynomial_obstacle,
    rectangle,
)


def _interior_centers(obs, n, seed):
    rng = np.random.default_rng(seed)
    R = obs.bound_radius
    out = []
    while len(out) < n:
        p = rng.uniform(-R, R, 2)
        # keep a margin so the centre is strictly inside
        if obs.phi(p[:, None])[0] < -0.05:
            out.append(p)
    return out


@pytest.mark.parametrize("obs", [disk(1.0), ellipse(2.0, 1.0), rectangle(4.0, 2.0)], ids=["disk", "ellipse", "rectangle"])
def test_convex_shapes_are_star_shaped(obs):
    for x in _interior_centers(obs, 10, seed=3):
        v = is_star_shaped(obs, x, n_samples=180)
        assert v.value is True, (x, v)


def test_annulus_not_star_shaped_with_witness():
    obs = annulus_channel(2.0, 3.0, 0.1)
    x = np.array([0.0, 2.5])
    v = is_star_shaped(obs, x)
    assert v.value is False
    # the witness lies on the inner ring
    assert np.hypot(*v.witness) == pytest.approx(2.0, abs=1e-3)


def test_center_outside_rejected():
    with pytest.raises(GeometryError, match="center-outside"):
        is_star_shaped(disk(1.0), [2.0, 0.0])


def test_directional_convexity_examples():
    assert is_directionally_convex(ellipse(2.0, 1.0), [1.0, 0.0]).value is True
    cr = crescent(1.0, 0.8, 1.2)
    assert is_directionally_convex(cr, [1.0, 0.0]).value is True
    assert is_directionally_convex(cr, [0.0, 1.0]).value is False
    v = is_directionally_convex(annulus_channel(2.0, 3.0, 0.1), [1.0, 0.0])
    assert v.value is False and v.witness is not None


def test_directional_convexity_requires_unit_vector():
    with pytest.raises(GeometryError):
        is_directionally_convex(disk(1.0), [2.0, 0.0])


@settings(max_examples=20, deadline=None)
@given(st.floats(0, 2 * np.pi), st.floats(-3, 3), st.floats(-3, 3))
def test_star_shape_rigid_motion_invariance(theta, dx, dy):
    # ellipse rotated by theta and moved by (dx, dy), viewed from the moved centre
    c, s = np.cos(theta), np.sin(theta)
    shift = np.array([dx, dy])
    base = ellipse(2.0, 1.0)

    def phi(P):
        Q = P - shift.reshape((2,) + (1,) * (P.ndim - 1))
        return base.phi(np.stack([c * Q[0] + s * Q[1], -s * Q[0] + c * Q[1]]))

    moved = Obstacle(phi, bound_radius=2.0 + np.hypot(dx, dy), label="moved ellipse")
    x = np.array([0.5, 0.2])
    xm = shift + np.array([c * x[0] - s * x[1], s * x[0] + c * x[1]])
    assert is_star_shaped(base, x, 90).value == is_star_shaped(moved, xm, 90).value


def test_empty_mask():
    g = make_mask(no_obstacle(), (-2, 2, -2, 2), 0.1)
    assert g.fluid.all() and g.boundary.sum() == 0 and len(g.ghost_index) == 0


def test_disk_boundary_cell_count():
    g = make_mask(disk(1.0), (-4, 4, -4, 4), 0.05)
    # [DERIVED] perimeter / h = 2 pi / 0.05 ~ 126
    perim = 2 * np.pi / 0.05
    assert abs(g.boundary.sum() - perim) <= 0.1 * perim


def test_mask_area_matches_geometry():
    g = make_mask(disk(1.0), (-4, 4, -4, 4), 0.05)
    assert g.fluid_area() == pytest.approx(64 - np.pi, rel=2e-3)


def test_annulus_connectivity():
    make_mask(annulus_channel(2.0, 3.0, 0.1), (-4, 4, -4, 4), 0.1)
    with pytest.raises(GeometryError, match="disconnected-fluid"):
        make_mask(annulus_channel(2.0, 3.0, 0.02), (-4, 4, -4, 4), 0.1)


def test_mask_requires_containing_rectangle():
    with pytest.raises(GeometryError):
        make_mask(disk(1.0), (-0.5, 4, -4, 4), 0.1)


def test_ghost_normals_are_unit_and_outward():
    g = make_mask(disk(1.0), (-3, 3, -3, 3), 0.1)
    nrm = np.linalg.norm(g.ghost_normal, axis=1)
    np.testing.assert_allclose(nrm, 1.0, atol=1e-6)
    P = g.mesh()[:, g.ghost_index[:, 0], g.ghost_index[:, 1]].T
    assert np.all(np.sum(P * g.ghost_normal, axis=1) > 0)
    # mirror points lie in the fluid
    assert np.all(g.obstacle.phi(g.ghost_mirror.T) > 0)


def test_polynomial_obstacle_matches_disk():
    obs = polynomial_obstacle({(2, 0): 1.0, (0, 2): 1.0, (0, 0): -1.0}, 1.0)
    P = np.array([[0.0, 0.5, 1.2], [0.0, 0.0, 0.0]])
    assert np.all(np.sign(obs.phi(P)) == [-1, -1, 1])
    assert is_star_shaped(obs, [0.0, 0.0], 90).value is True


def test_zeta_empty_obstacle_is_one():
    g = make_mask(no_obstacle(), (-2, 2, -2, 2), 0.1)
    z = build_zeta(no_obstacle(), g, eta=0.1, Dbar=1.0)
    P = np.random.default_rng(0).uniform(-2, 2, (2, 50))
    np.testing.assert_array_equal(z.value(P), 1.0)
    np.testing.assert_array_equal(z.lap(P), 0.0)


def test_zeta_disk_properties():
    g = make_mask(disk(1.0), (-6, 6, -6, 6), 0.1)
    z = build_zeta(disk(1.0), g, eta=0.1, Dbar=1.0)
    vals = z.grid_values[g.fluid]
    assert vals.min() > 1.0
    assert z.grid_lap_ratio <= 0.1
    # analytic normal derivative (outward from the domain, i.e. into K) on the circle
    th = np.linspace(0, 2 * np.pi, 200, endpoint=False)
    P = 1.0 * np.stack([np.cos(th), np.sin(th)])
    dn = np.sum(z.grad(P) * (-P), axis=0)
    np.testing.assert_allclose(dn, 1.0, atol=1e-6)
    # the grid measurement agrees within 5%
    assert np.all(np.abs(z.normal_derivative - 1.0) <= 0.05)


def test_zeta_unreachable_bound():
    g = make_mask(disk(1.0), (-3, 3, -3, 3), 0.1)
    with pytest.raises(GeometryError, match="bound-unreachable"):
        build_zeta(disk(1.0), g, eta=1e-12, Dbar=1.0, collar=0.4, max_lift=10.0)
