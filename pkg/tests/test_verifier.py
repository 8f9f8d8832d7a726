from __future__ import annotations

import numpy as np
import pytest

from bistable_obstacle import verifier as V
from bistable_obstacle.errors import VerifierError
from bistable_obstacle.geometry import disk, no_obstacle
from bistable_obstacle.grid_solver import Scenario, Simulation


@pytest.fixture(scope="module")
def growing(cubic_ledger, cubic_pq, disk_zeta, cubic_front, disk_grid):
    return V.build_growing_pair(cubic_ledger, cubic_pq, disk_zeta, cubic_front, grid=disk_grid)


@pytest.fixture(scope="module")
def decaying(cubic_ledger, cubic_pq, disk_zeta, cubic_front, disk_grid):
    return V.build_decaying_pair(cubic_ledger, cubic_pq, disk_zeta, cubic_front, grid=disk_grid)


def test_constant_candidate(cubic):
    # [DERIVED] L = -F(1/2) = -(1/2)(1/2)(1/4)
    region = V.SampleRegion(np.zeros(5), np.random.default_rng(0).normal(size=(2, 5)))
    rep = V.operator_residual(V.constant_candidate([0.5, 0.5], "sub"), cubic, region)
    np.testing.assert_allclose(rep.min, -0.0625)
    np.testing.assert_allclose(rep.max, -0.0625)
    assert rep.passed


def test_exact_front_residual(cubic, cubic_front):
    rng = np.random.default_rng(1)
    region = V.SampleRegion(rng.uniform(-20, 20, 20000), np.stack([rng.uniform(-25, 25, 20000), rng.uniform(-5, 5, 20000)]))
    rep = V.operator_residual(V.front_candidate(cubic_front), cubic, region)
    # [TRIVIAL] the only residual left is the front-ODE residual, bounded by 10 x its 1e-9 target
    assert max(np.abs(rep.min).max(), np.abs(rep.max).max()) <= 10 * 1e-9


def test_front_candidate_derivatives_match_differences(cubic_front):
    rng = np.random.default_rng(2)
    t, X = rng.uniform(-5, 5, 300), rng.uniform(-8, 8, (2, 300))
    assert V.derivative_check(V.front_candidate(cubic_front), t, X) <= 1e-5


def test_growing_pair_signs(growing, cubic):
    up = V.operator_residual(growing.upper, cubic, n=20000)
    lo = V.operator_residual(growing.lower, cubic, n=20000)
    assert up.passed and lo.passed
    assert up.derivative_error <= 1e-5 and lo.derivative_error <= 1e-5
    # Neumann flux signs hold wherever a branch is active on the wall
    assert up.boundary_violations == 0 and lo.boundary_violations == 0
    assert np.nanmin(up.boundary_min) >= -1e-9


def test_growing_pair_ordering_and_gap(growing, cubic_pq, cubic_ledger):
    assert V.pair_ordering(growing, n=20000) <= 1e-12
    # sup gap at the left end of the window obeys the closed-form bound
    c = growing.constants
    t0 = growing.upper.t_range[0]
    rng = np.random.default_rng(3)
    X = np.stack([rng.uniform(-30, 30, 5000), rng.uniform(-5, 5, 5000)])
    X = X[:, np.hypot(X[0], X[1]) > 1.0]
    t = np.full(X.shape[1], t0)
    gap = np.abs(growing.upper(t, X) - growing.lower(t, X)).max()
    front = growing.upper.front
    shift = 2 * c["w"] * np.exp(c["eta"] * t0) * np.abs(front.deriv).max()
    pad = 2 * c["A"] * np.exp(c["eta"] * t0) * cubic_pq.pf.qstar_high * c["zeta"]
    assert gap <= shift + pad + 1e-12


def test_growing_pair_audit_is_complete(growing):
    names = {a[0] for a in growing.audit}
    assert {"delta", "C", "kappa", "w", "T", "eta"} <= names
    assert growing.constants["w"] >= 2 * growing.constants["w_min"] * (1 - 1e-12)


def test_decaying_pair_signs(decaying, cubic):
    lo = V.operator_residual(decaying.lower, cubic, n=20000)
    up = V.operator_residual(decaying.upper, cubic, n=20000)
    assert lo.passed and up.passed
    assert lo.margin > 1.0 and up.margin > 1.0


def test_expanding_subsolution_sign(cubic_ledger, cubic_pq, disk_zeta, cubic_front, disk_grid, cubic):
    cand = V.build_key_subsolution(cubic_ledger, cubic_pq, disk_zeta, cubic_front, grid=disk_grid)
    rep = V.operator_residual(cand, cubic, n=20000)
    assert rep.passed
    k = cand.constants
    assert k["R1"] < k["R2"] <= k["R3"]
    # at t = 0 the candidate vanishes outside the ball of radius R1
    th = np.linspace(0, 2 * np.pi, 64)
    ring = (k["R1"] + 1.0) * np.stack([np.cos(th), np.sin(th)])
    assert np.all(cand(np.zeros(64), ring) == 0.0)


def test_radial_derivatives_with_small_constants(cubic_front, cubic_pq):
    # modest constants keep every coordinate small enough for the difference check
    hp = V.build_h_profile(0.2)
    phase = V.RadialPhase(hprof=hp, speed=0.25, w=3.0, decay=0.05, shift=hp.H + 2.0)
    z = V.CandidateFunction(name="radial", kind="sub", front=cubic_front, phase=phase, pq=cubic_pq, zeta=None,
                            amp=-0.05, rate=-0.05, clip="lower", origin=np.zeros(2), t_range=(0.0, 10.0))
    rng = np.random.default_rng(4)
    t = rng.uniform(0, 10, 400)
    r = rng.uniform(0, hp.H + 15, 400)
    th = rng.uniform(0, 2 * np.pi, 400)
    X = r * np.stack([np.cos(th), np.sin(th)])
    assert V.derivative_check(z, t, X) <= 1e-5


def test_h_profile_properties():
    hp = V.build_h_profile(0.1)
    r = np.linspace(0, 3 * hp.H, 5001)
    assert np.all(hp.d1(r) >= 0) and np.all(hp.d1(r) <= 1)
    assert np.all(hp.radial_operator(r) <= 0.05 * (1 + 1e-6))
    assert hp.value(np.array(0.0)) == pytest.approx(hp.h0)
    np.testing.assert_allclose(hp.value(r[r >= hp.H]), r[r >= hp.H])
    # derivatives agree with differences of the value
    fd = np.gradient(hp.value(r), r)
    np.testing.assert_allclose(hp.d1(r)[2:-2], fd[2:-2], atol=1e-3)
    with pytest.raises(VerifierError, match="hmu-construction-failure"):
        V.build_h_profile(0.0)


def test_growing_pair_constraint_violations(cubic_ledger, cubic_pq, disk_zeta, cubic_front, disk_grid, growing):
    args = (cubic_ledger, cubic_pq, disk_zeta, cubic_front)
    with pytest.raises(VerifierError, match="constraint-violation: delta"):
        V.build_growing_pair(*args, delta=10 * growing.constants["delta"], grid=disk_grid)
    with pytest.raises(VerifierError, match="constraint-violation: shift-speed"):
        V.build_growing_pair(*args, w_const=0.5 * growing.constants["w_min"], grid=disk_grid)
    with pytest.raises(VerifierError, match="constraint-violation: start-time"):
        V.build_growing_pair(*args, T=0.0, grid=disk_grid)


def test_smaller_delta_keeps_pair_valid(cubic_ledger, cubic_pq, disk_zeta, cubic_front, disk_grid, growing, cubic):
    # shrinking the padding stays admissible and the residual signs still hold
    for f in (0.5, 0.25):
        pair = V.build_growing_pair(cubic_ledger, cubic_pq, disk_zeta, cubic_front,
                                    delta=f * growing.constants["delta"], grid=disk_grid)
        assert V.operator_residual(pair.upper, cubic, n=5000).passed
        assert V.operator_residual(pair.lower, cubic, n=5000).passed


def test_sign_check_catches_a_bad_candidate(cubic, cubic_front):
    # a front running ahead of the true speed is not a subsolution: the check must flag it
    cand = V.CandidateFunction(name="fast", kind="sub", front=cubic_front,
                               phase=V.PlanarPhase(c=1.5 * cubic_front.c), origin=np.zeros(2))
    rng = np.random.default_rng(5)
    region = V.SampleRegion(rng.uniform(0, 5, 2000), np.stack([rng.uniform(-10, 10, 2000), np.zeros(2000)]))
    rep = V.operator_residual(cand, cubic, region)
    assert not rep.passed and len(rep.violations) > 0


def test_boundary_samples_on_disk():
    P, nu = V.boundary_samples(disk(1.0), 90)
    np.testing.assert_allclose(np.hypot(*P), 1.0, atol=1e-9)
    # the outward normal of the domain points into the disk
    np.testing.assert_allclose(np.sum(P * nu, axis=0), -1.0, atol=1e-6)
    assert V.boundary_samples(no_obstacle())[0].shape == (2, 0)


def test_discrete_residual_closes(cubic, cubic_front):
    scen = Scenario(system=cubic, rect=(-6.0, 6.0, -3.0, 3.0), h=0.2, obstacle=disk(1.0), front=cubic_front,
                    init={"kind": "front", "shift": -2.0})
    sim = Simulation(scen)
    st = sim.initial_state()
    nxt = sim.step(st)
    free = ~sim.pinned
    r = V.discrete_residual(sim, st.u, nxt.u, sim.dt)[:, free]
    assert np.abs(r).max() <= 1e-10


def test_report_text(growing, cubic):
    rep = V.operator_residual(growing.upper, cubic, n=2000)
    txt = rep.to_text()
    assert "growing-upper" in txt and "w =" in txt
