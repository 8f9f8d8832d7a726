from __future__ import annotations

import numpy as np
import pytest

from bistable_obstacle.errors import SolverError
from bistable_obstacle.geometry import annulus_channel, disk, make_mask, no_obstacle, rectangle
from bistable_obstacle.grid_solver import (
    Scenario,
    Simulation,
    StateGrid,
    interface_abscissa,
    laplacian,
    read_snapshot,
    residual_elliptic,
    write_snapshot,
)
from bistable_obstacle.lotka import LVParams, lv_system
from bistable_obstacle.systems import SystemDef, cubic_pair


def _sim(system, obstacle=None, rect=(-4.0, 4.0, -4.0, 4.0), h=0.2, **kw):
    kw.setdefault("far_field", "neumann")
    return Simulation(Scenario(system=system, rect=rect, h=h, obstacle=obstacle or no_obstacle(), **kw))


def _comparison_violations(sim, n_pairs=100, n_steps=1000, seed=0):
    rng = np.random.default_rng(seed)
    shape = (n_pairs, sim.m, sim.n)
    lo = rng.random(shape)
    hi = np.clip(lo + rng.random(shape) * rng.random((n_pairs, 1, 1)), 0.0, 1.0)
    # a few pairs with equal entries on half of the cells
    hi[:10, :, : sim.n // 2] = lo[:10, :, : sim.n // 2]
    a, b = StateGrid(lo, 0.0), StateGrid(hi, 0.0)
    worst = -np.inf
    for _ in range(n_steps):
        a, b = sim.step(a), sim.step(b)
        worst = max(worst, float((a.u - b.u).max()))
    return worst


@pytest.mark.parametrize(
    "make",
    [
        lambda: _sim(cubic_pair(0.25)),
        lambda: _sim(cubic_pair(0.25), disk(1.0)),
        lambda: _sim(lv_system(LVParams(1.1, 2.0, 1.0, 1.0)), rectangle(2.0, 1.0)),
        lambda: _sim(cubic_pair(0.45), annulus_channel(2.0, 3.0, 0.3), rect=(-3.6, 3.6, -3.6, 3.6)),
    ],
    ids=["cubic-free", "cubic-disk", "lv-rectangle", "cubic-annulus"],
)
def test_discrete_comparison_principle(make):
    # ordered data stay ordered; the only slack allowed is the clamp round-off (full-size run in the acceptance suite)
    assert _comparison_violations(make(), n_pairs=20, n_steps=200) <= 1e-12


def test_equilibria_are_fixed(cubic):
    sim = _sim(cubic, disk(1.0))
    for v in (0.0, 1.0):
        st = StateGrid(np.full((2, sim.n), v), 0.0)
        for _ in range(200):
            st = sim.step(st)
        np.testing.assert_allclose(st.u, v, atol=1e-14)


def test_order_interval_overshoot_small(cubic):
    sim = _sim(cubic, disk(1.0))
    rng = np.random.default_rng(2)
    st = StateGrid(rng.random((2, sim.n)), 0.0)
    rec: dict = {}
    for _ in range(300):
        st = sim.step(st, rec)
    assert rec["overshoot"] <= 1e-12


def test_dt_rule_and_cfl_violation(cubic):
    sim = _sim(cubic)
    assert sim.dt * (4 * cubic.Dbar / sim.grid.h**2 + sim.Lambda) <= 1.0
    with pytest.raises(SolverError, match="cfl-violation"):
        _sim(cubic, dt=2 * sim.dt_max)


def test_nan_detected():
    bad = SystemDef(m=1, D=[1.0], F=lambda u: np.where(u > 0.9, np.nan, 0.0 * u), name="bad")
    sim = _sim(bad, Lambda=1.0)
    st = StateGrid(np.full((1, sim.n), 0.95), 0.0)
    with pytest.raises(SolverError, match="nan-detected"):
        sim.step(st)


@pytest.mark.parametrize("obs,mode", [(None, "mirror"), (disk(1.0), "zero_flux"), (rectangle(2.0, 1.0), "zero_flux")])
def test_laplacian_self_adjoint(obs, mode):
    g = make_mask(obs or no_obstacle(), (-3, 3, -3, 3), 0.1)
    L = laplacian(g, mode)
    rng = np.random.default_rng(4)
    u, v = rng.random(L.shape[0]), rng.random(L.shape[0])
    assert abs(u @ (L @ v) - v @ (L @ u)) <= 1e-10 * abs(u @ (L @ v)) + 1e-10


def test_mirror_laplacian_kills_constants_and_keeps_monotone_structure():
    g = make_mask(disk(1.0), (-3, 3, -3, 3), 0.1)
    L = laplacian(g, "mirror").tocoo()
    np.testing.assert_allclose(L @ np.ones(L.shape[0]), 0.0, atol=1e-9)
    off = L.row != L.col
    assert L.data[off].min() >= 0.0


@pytest.mark.parametrize("mode", ["mirror", "zero_flux"])
def test_mass_conserved_without_reaction(mode):
    zero = SystemDef(m=1, D=[1.0], F=lambda u: 0.0 * u, name="heat")
    sim = _sim(zero, disk(1.0), neumann_mode=mode, Lambda=0.0)
    rng = np.random.default_rng(5)
    st = StateGrid(rng.random((1, sim.n)), 0.0)
    m0 = st.u.sum()
    for _ in range(500):
        st = sim.step(st)
    if mode == "zero_flux":
        assert st.u.sum() == pytest.approx(m0, rel=1e-12)
    else:
        # mirror ghosts redistribute flux at curved walls; mass drifts only at the first-order level
        assert st.u.sum() == pytest.approx(m0, rel=1e-2)


def test_planar_front_speed(cubic, cubic_front):
    # strip without obstacle: the half level advances at the front speed
    c = cubic_front.c
    scen = Scenario(system=cubic, rect=(-30.0, 30.0, -1.0, 1.0), h=0.1, init={"kind": "front", "shift": -15.0},
                    front=cubic_front, far_field="front-pinned")
    sim = Simulation(scen)
    traj = sim.run(t_end=2.0 + 10.0 / c, snapshot_every=0.5)
    x = np.array([interface_abscissa(sim, u[0]) for u in traj.states])
    t = np.array(traj.times)
    k0 = int(np.argmin(np.abs(t - 2.0)))
    speed = -(x[-1] - x[k0]) / (t[-1] - t[k0])
    assert speed == pytest.approx(c, rel=0.03)


def test_speed_refinement(cubic, cubic_front):
    c = cubic_front.c
    errs = []
    for h in (0.4, 0.2):
        scen = Scenario(system=cubic, rect=(-30.0, 30.0, -h, h), h=h, init={"kind": "front", "shift": -15.0},
                        front=cubic_front, far_field="front-pinned")
        sim = Simulation(scen)
        traj = sim.run(t_end=40.0, snapshot_every=1.0)
        x = np.array([interface_abscissa(sim, u[0]) for u in traj.states])
        t = np.array(traj.times)
        sel = t >= 10.0
        slope = np.polyfit(t[sel], x[sel], 1)[0]
        errs.append(abs(-slope - c))
    assert errs[0] / errs[1] >= 3.0


def test_mirror_symmetry(cubic, cubic_front):
    scen = Scenario(system=cubic, rect=(-10.0, 6.0, -4.0, 4.0), h=0.2, obstacle=disk(1.0),
                    init={"kind": "front", "shift": -4.0}, front=cubic_front, t_end=15.0, snapshot_every=5.0)
    traj = Simulation(scen).run()
    for k in range(len(traj)):
        g = traj.field(k)
        assert np.nanmax(np.abs(g - g[:, ::-1, :])) <= 1e-8


def test_zero_length_run(cubic, cubic_front):
    scen = Scenario(system=cubic, rect=(-6.0, 6.0, -3.0, 3.0), h=0.2, obstacle=disk(1.0), front=cubic_front,
                    t_end=0.0)
    sim = Simulation(scen)
    traj = sim.run()
    assert len(traj) == 1
    np.testing.assert_array_equal(traj.states[0], sim.initial_state().u)


def test_residual_examples(cubic, cubic_front):
    sim = _sim(cubic, disk(1.0))
    one = StateGrid(np.ones((2, sim.n)), 0.0)
    assert residual_elliptic(one, sim)["max"].max() <= 1e-12
    scen = Scenario(system=cubic, rect=(-8.0, 8.0, -4.0, 4.0), h=0.2, obstacle=disk(1.0),
                    init={"kind": "front", "shift": -4.0}, front=cubic_front, far_field="front-pinned")
    msim = Simulation(scen)
    st = msim.run(t_end=5.0).states[-1]
    assert residual_elliptic(StateGrid(st, 5.0), msim)["max"].max() > 1e-2


def test_snapshot_round_trip(tmp_path, cubic, cubic_front):
    scen = Scenario(system=cubic, rect=(-6.0, 6.0, -3.0, 3.0), h=0.2, obstacle=disk(1.0), front=cubic_front)
    sim = Simulation(scen)
    st = sim.initial_state()
    write_snapshot(tmp_path / "s.bin", sim, st)
    back = read_snapshot(tmp_path / "s.bin")
    np.testing.assert_array_equal(sim.from_grid(back["data"]), st.u)
    assert back["h"] == 0.2 and back["m"] == 2
    # a file initial condition reproduces the state
    sim2 = Simulation(scen.replace(init={"kind": "file", "path": str(tmp_path / "s.bin")}))
    np.testing.assert_array_equal(sim2.initial_state().u, st.u)


def test_run_writes_trajectory(tmp_path, cubic, cubic_front):
    scen = Scenario(system=cubic, rect=(-6.0, 6.0, -3.0, 3.0), h=0.2, front=cubic_front, t_end=1.0, snapshot_every=0.5)
    traj = Simulation(scen).run(out_dir=tmp_path)
    assert (tmp_path / "events.csv").exists()
    assert len(list(tmp_path.glob("snap_*.bin"))) == len(traj)


def test_disk_write_failure(tmp_path, cubic, cubic_front):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    scen = Scenario(system=cubic, rect=(-6.0, 6.0, -3.0, 3.0), h=0.2, front=cubic_front, t_end=0.5)
    with pytest.raises(SolverError, match="disk-write"):
        Simulation(scen).run(out_dir=blocker / "sub")
