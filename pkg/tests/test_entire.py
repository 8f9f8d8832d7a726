from __future__ import annotations

import numpy as np
import pytest

from bistable_obstacle.entire import approximate_entire_solution, extract_u_infinity, window_simulation
from bistable_obstacle.errors import EntireError
from bistable_obstacle.geometry import disk
from bistable_obstacle.grid_solver import Scenario, Simulation


def _scen(cubic, front, obstacle=None, rect=(-4.0, 16.0, -2.0, 2.0), h=0.2):
    kw = {} if obstacle is None else {"obstacle": obstacle}
    return Scenario(system=cubic, rect=rect, h=h, front=front, t_end=0.0, init={"kind": "front", "shift": 0.0}, **kw)


def test_free_space_runs_coincide(cubic, cubic_front):
    # [TRIVIAL] without an obstacle every run is the planar front
    c = cubic_front.c
    E = approximate_entire_solution(_scen(cubic, cubic_front), [d / c for d in (6.0, 8.0, 10.0)])
    assert max(E.gaps.values()) <= 1e-4
    assert E.min_time_derivative >= -1e-8
    assert E.front_gap <= 5e-3


def test_disk_runs_monotone(cubic, cubic_front):
    # starts far enough right that the front tail at the obstacle is below the comparison tolerance
    c = cubic_front.c
    scen = _scen(cubic, cubic_front, disk(1.0), rect=(-4.0, 34.0, -3.0, 3.0))
    E = approximate_entire_solution(scen, [d / c for d in (20.0, 24.0, 28.0)])
    assert E.n_monotone_violations == 0
    assert E.min_time_derivative >= -1e-8
    g = [E.gaps[n] for n in E.n_list[:-1]]
    assert g[1] < g[0]


def test_supersolution_init_stays_above(cubic, cubic_front):
    c = cubic_front.c
    scen = _scen(cubic, cubic_front, disk(1.0), rect=(-6.0, 20.0, -4.0, 4.0))
    ns = [d / c for d in (7.0, 10.0)]
    lead = lambda t, xy: cubic_front(xy[0] + c * t + 0.5)
    lo = approximate_entire_solution(scen, ns)
    hi = approximate_entire_solution(scen, ns, init_mode="supersolution", upper=lead)
    n = ns[-1]
    for u_lo, u_hi in zip(lo.states[n], hi.states[n]):
        assert np.all(u_lo <= u_hi + 1e-12)


def test_start_checks(cubic, cubic_front):
    c = cubic_front.c
    scen = _scen(cubic, cubic_front, disk(1.0))
    with pytest.raises(EntireError, match="front-overlaps-obstacle"):
        approximate_entire_solution(scen, [1.0 / c, 2.0 / c])
    with pytest.raises(EntireError, match="insufficient-overlap"):
        approximate_entire_solution(scen, [8.0 / c])
    with pytest.raises(EntireError):
        approximate_entire_solution(scen, [7.0 / c, 9.0 / c], init_mode="supersolution")


def test_window_maps_parent_cells(cubic, cubic_front):
    sim = Simulation(_scen(cubic, cubic_front, disk(1.0), rect=(-6.0, 6.0, -6.0, 6.0)))
    wsim, src = window_simulation(sim, (-3.0, 3.0, -3.0, 3.0))
    np.testing.assert_allclose(wsim.xy, sim.xy[:, src])
    assert wsim.scen.far_field == "neumann"


def test_limit_of_full_state_is_one(cubic, cubic_front):
    sim = Simulation(_scen(cubic, cubic_front, disk(1.0), rect=(-6.0, 6.0, -6.0, 6.0)))
    u = np.full((2, sim.n), 0.9)
    lim = extract_u_infinity(sim, u, window=(-4.0, 4.0, -4.0, 4.0), relax_time=200.0)
    assert lim.converged and lim.is_one
    assert lim.residual <= 1e-4


def test_limit_not_converged(cubic, cubic_front):
    sim = Simulation(_scen(cubic, cubic_front, disk(1.0), rect=(-6.0, 6.0, -6.0, 6.0)))
    with pytest.raises(EntireError, match="not-converged"):
        extract_u_infinity(sim, np.full((2, sim.n), 0.6), window=(-4.0, 4.0, -4.0, 4.0), relax_time=0.5)
