import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from isg import ControlSequence, ValueGrid, auxiliary_cost, discounted_cost, get_scenario, truncation_horizon
from isg.game_model import constant_scenario
from isg.payoff import exp_weights


def const(i, h, n):
    return ControlSequence.constant(i, h, n)


def flat_grid(spec, value):
    axes = tuple(np.linspace(lo - 1, hi + 1, 3) for lo, hi in zip(spec.Z_lo, spec.Z_hi))
    return ValueGrid(axes, np.full((3,) * spec.dim, float(value)), lam=spec.lam)


@settings(max_examples=200)
@given(st.floats(0.05, 5), st.floats(1e-6, 2), st.floats(-3, 3), st.floats(-3, 3))
def test_exp_weights_integrate_affine_costs_exactly(lam, dt, a, b):
    w0, w1 = exp_weights(lam, dt)
    exact, _ = quad(lambda t: math.exp(-lam * t) * (a + b * t / dt), 0.0, dt, epsabs=0, epsrel=1e-13)
    assert w0 >= 0 and w1 >= 0
    assert float(w0 * a + w1 * (a + b)) == pytest.approx(exact, rel=1e-9, abs=1e-12)


def test_exp_weights_continuous_at_series_switch():
    below = exp_weights(1.0, 0.1 - 1e-12)
    above = exp_weights(1.0, 0.1 + 1e-12)
    assert np.allclose(below, above, rtol=1e-9)


@pytest.mark.parametrize("ell_bound,lam,eps,expected", [
    (1.0, 1.0, math.exp(-3), 3.0),
    (1.0, 1.0, 2.0, 0.0),
    (2.0, 0.5, 0.01, 2 * math.log(400)),
])
def test_truncation_horizon(ell_bound, lam, eps, expected):
    spec = constant_scenario(c=ell_bound, lam=lam)
    T = truncation_horizon(spec, eps)
    assert T == pytest.approx(expected, rel=1e-12, abs=1e-12)
    if T > 0:
        # independent check: numerical tail of the bound integral
        tail = np.trapezoid(ell_bound * np.exp(-lam * np.linspace(T, T + 60 / lam, 200001)),
                            dx=(60 / lam) / 200000)
        assert tail == pytest.approx(eps, rel=1e-6)


def test_truncation_horizon_example_value():
    assert truncation_horizon(constant_scenario(c=2.0, lam=0.5), 0.01) == pytest.approx(11.983, abs=5e-4)


@pytest.mark.parametrize("c,lam", [(1.0, 1.0), (2.5, 0.5), (-1.0, 2.0)])
def test_constant_cost_payoff(c, lam):
    spec = constant_scenario(c=c, lam=lam)
    eps = 1e-5
    res = discounted_cost(spec, [0.0, 0.0], const(1, 0.1, 400), const(2, 0.1, 400), eps)
    T = res.horizon_used
    assert res.value == pytest.approx(c / lam * (1 - math.exp(-lam * T)), rel=1e-12)
    assert res.truncation_error_bound == pytest.approx(abs(c) * math.exp(-lam * T) / lam, rel=1e-12)
    assert abs(res.value - c / lam) <= eps * (1 + 1e-9)


def test_zero_cost_payoff_is_zero():
    spec = get_scenario("bilinear")
    res = discounted_cost(spec, [0.3, 0.0], const(0, 0.1, 5), const(1, 0.1, 5), 1e-3)
    assert res.value == 0.0


def test_frozen_pursuit_payoff():
    spec = get_scenario("pursuit-1d")
    eps = 1e-6
    res = discounted_cost(spec, [1.0, 0.0], const(2, 0.05, 400), const(2, 0.05, 400), eps)
    assert abs(res.value - 0.5) <= eps


def test_payoff_needs_coverage():
    spec = get_scenario("pursuit-1d")
    with pytest.raises(ValueError):
        discounted_cost(spec, [0.0, 0.0], const(0, 0.1, 10), const(0, 0.1, 10), 1e-6)


def test_halving_eps_changes_value_by_at_most_eps():
    spec = get_scenario("pursuit-1d")
    rng = np.random.default_rng(4)
    useq = ControlSequence(0.05, rng.integers(0, 3, 400).tolist())
    vseq = ControlSequence(0.05, rng.integers(0, 3, 400).tolist())
    eps = 1e-3
    a = discounted_cost(spec, [0.2, 0.0], useq, vseq, eps / 2).value
    b = discounted_cost(spec, [0.2, 0.0], useq, vseq, eps / 4).value
    assert abs(a - b) <= eps


@settings(max_examples=40, deadline=None)
@given(st.floats(-1.5, 1.5), st.floats(-0.3, 0.3), st.integers(0, 2**32 - 1))
def test_payoff_is_lipschitz_in_the_initial_state(x, dx, seed):
    spec = get_scenario("pursuit-1d")
    rng = np.random.default_rng(seed)
    useq = ControlSequence(0.1, rng.integers(0, 3, 200).tolist())
    vseq = ControlSequence(0.1, rng.integers(0, 3, 200).tolist())
    a = discounted_cost(spec, [x, 0.0], useq, vseq, 1e-7).value
    b = discounted_cost(spec, [x + dx, 0.0], useq, vseq, 1e-7).value
    d = abs(dx)
    C = spec.L_ell / (spec.lam - spec.L_F)
    assert abs(a - b) <= 1.2 * C * (d + d**spec.gamma) + 2e-7


def test_auxiliary_cost_examples():
    spec = constant_scenario(c=1.0, lam=1.0)
    u, v = const(0, 0.1, 30), const(2, 0.1, 30)
    assert auxiliary_cost(spec, [0.0, 0.0], u, v, flat_grid(spec, 0.0)) == pytest.approx(1 - math.exp(-1), abs=1e-9)
    assert auxiliary_cost(spec, [0.3, 0.4], u, v, flat_grid(spec, 1.0)) == pytest.approx(1.0, abs=1e-12)
    assert auxiliary_cost(spec, [0.3, 1.2], u, v, flat_grid(spec, 0.7)) == pytest.approx(0.7, abs=1e-15)


def test_auxiliary_cost_rejects_states_off_the_grid():
    spec = get_scenario("pursuit-1d")
    axes = (np.linspace(-0.5, 0.5, 3), np.linspace(0, 1.5, 3))
    V = ValueGrid(axes, np.zeros((3, 3)))
    with pytest.raises(ValueError):
        auxiliary_cost(spec, [0.0, 0.0], const(2, 0.1, 20), const(0, 0.1, 20), V)


@settings(max_examples=30, deadline=None)
@given(x=st.floats(-1.0, 1.0), dx=st.floats(-0.2, 0.2), y=st.floats(0, 0.9), seed=st.integers(0, 2**32 - 1))
def test_auxiliary_cost_is_continuous(x, dx, y, seed, pursuit_V):
    spec = get_scenario("pursuit-1d")
    rng = np.random.default_rng(seed)
    useq = ControlSequence(0.1, rng.integers(0, 3, 20).tolist())
    vseq = ControlSequence(0.1, rng.integers(0, 3, 20).tolist())
    a = auxiliary_cost(spec, [x, y], useq, vseq, pursuit_V)
    b = auxiliary_cost(spec, [x + dx, y], useq, vseq, pursuit_V)
    d = abs(dx)
    C = spec.L_ell / (spec.lam - spec.L_F)
    assert abs(a - b) <= 1.2 * C * (d + d**spec.gamma) + 1e-9
