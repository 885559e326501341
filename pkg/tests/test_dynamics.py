import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from isg import ControlSequence, HorizonExhausted, flow_step, get_scenario, hitting_bound, hitting_time, simulate
from isg.dynamics import hit_tolerance


def const(i, h, n):
    return ControlSequence.constant(i, h, n)


def test_constant_scenario_step_is_exact():
    spec = get_scenario("constant")
    assert np.array_equal(flow_step(spec, [0.0, 0.0], [1.0], [-1.0], 0.1), [0.0, 0.1])


@given(st.floats(-2, 2), st.floats(0, 1), st.sampled_from([-1.0, 0.0, 1.0]), st.floats(0.01, 1))
def test_equal_controls_cancel(x0, y0, c, h):
    spec = get_scenario("pursuit-1d")
    z = flow_step(spec, [x0, y0], [c], [c], h)
    assert z[0] == x0
    assert z[1] == pytest.approx(y0 + h, abs=1e-14)


def test_pursuit_step_matches_closed_form():
    spec = get_scenario("pursuit-1d")
    # x' = 1 - (-1) = 2, y' = 1: the exact flow is linear
    z = flow_step(spec, [1.0, 0.0], [1.0], [-1.0], 0.5)
    assert np.allclose(z, [1.0 + 2 * 0.5, 0.0 + 0.5], rtol=0, atol=1e-15)


def test_rk4_is_fourth_order():
    spec = get_scenario("quadratic-speed")
    exact = math.tan(0.4)  # y' = 1 + y^2, y(0) = 0
    errs = []
    for n in (4, 8, 16):
        z = np.array([0.0, 0.0])
        for _ in range(n):
            z = flow_step(spec, z, [0.0], [0.0], 0.4 / n)
        errs.append(abs(z[1] - exact))
    rates = [math.log2(errs[i] / errs[i + 1]) for i in range(2)]
    assert min(rates) > 3.7


def test_simulate_contract():
    spec = get_scenario("constant")
    traj = simulate(spec, [0.0, 0.0], const(0, 0.1, 10), const(0, 0.1, 10), 1.0)
    assert len(traj.states) == 11
    assert np.allclose(traj.final, [0.0, 1.0], atol=1e-14)
    empty = simulate(spec, [0.3, 0.2], const(0, 0.1, 10), const(0, 0.1, 10), 0.0)
    assert len(empty.states) == 1 and np.array_equal(empty.states[0], [0.3, 0.2])


def test_simulate_row_count_with_partial_last_step():
    spec = get_scenario("pursuit-1d")
    traj = simulate(spec, [0.5, 0.0], const(2, 0.3, 10), const(2, 0.3, 10), 1.0)
    assert len(traj.states) == math.ceil(1.0 / 0.3) + 1
    assert traj.times[-1] == 1.0
    assert np.all(traj.states[:, 0] == 0.5)
    assert np.allclose(traj.states[:, 1], traj.times)


def test_simulate_errors():
    spec = get_scenario("constant")
    with pytest.raises(ValueError):
        simulate(spec, [0, 0], const(0, 0.1, 5), const(0, 0.2, 5), 0.3)
    with pytest.raises(ValueError):
        simulate(spec, [0, 0], const(0, 0.1, 5), const(0, 0.1, 5), 1.0)


@settings(max_examples=50)
@given(st.integers(0, 2), st.integers(0, 2), st.floats(-1.5, 1.5), st.floats(0, 0.9))
def test_consecutive_states_respect_speed_bound(a, b, x0, y0):
    spec = get_scenario("pursuit-1d")
    traj = simulate(spec, [x0, y0], const(a, 0.05, 20), const(b, 0.05, 20), 1.0)
    steps = np.linalg.norm(np.diff(traj.states, axis=0), axis=1)
    assert np.all(steps <= 0.05 * spec.F_bound * (1 + 1e-12))


def test_hitting_at_threshold_is_immediate():
    spec = get_scenario("constant")
    res = hitting_time(spec, [0.2, 1.0], const(0, 0.1, 1), const(0, 0.1, 1))
    assert res.hit and res.T == 0.0 and np.array_equal(res.z_at_T, [0.2, 1.0])


def test_hitting_state_is_on_threshold():
    spec = get_scenario("quadratic-speed")
    res = hitting_time(spec, [0.0, 0.0], const(0, 0.07, 40), const(0, 0.07, 40))
    assert abs(res.z_at_T[1] - spec.M0) <= hit_tolerance(spec)


def test_hitting_requires_enough_controls():
    spec = get_scenario("constant")
    with pytest.raises(ValueError):
        hitting_time(spec, [0, 0], const(0, 0.1, 5), const(0, 0.1, 5))


def test_horizon_exhausted_when_speed_vanishes_between_samples():
    spec = get_scenario("constant")
    # g vanishes at a point halfway between the nodes hitting_bound samples, so
    # the sampled bound looks fine but y never gets past the dip
    c = 0.5 + 0.5 / 1024

    def g(y, u, v):
        shape = np.broadcast_shapes(np.shape(y), u.shape[:-1], v.shape[:-1])
        return np.broadcast_to(np.minimum(1.0, 10.0 * np.abs(np.asarray(y) - c)), shape)

    stalled = dataclasses.replace(spec, g=g)
    n = math.ceil(hitting_bound(stalled) / 0.1) + 1
    with pytest.raises(HorizonExhausted):
        hitting_time(stalled, [0, 0], const(0, 0.1, n), const(0, 0.1, n))


def test_hitting_bound_constant_speed():
    assert hitting_bound(get_scenario("constant")) == pytest.approx(1 / 0.9)
