import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from muprocess.paths import (NOT_REACHED, ParameterError, TimeIndex,
                             build_mu_process, hitting_time,
                             sgn_b_increments, simulate_driver)


def test_driver_shapes_and_start():
    d = simulate_driver(seed=42, dt=1e-3, n=100)
    assert d.btilde.shape == (101,)
    assert d.smax.shape == (101,)
    assert d.btilde[0] == 0.0
    assert d.smax[0] == 0.0


def test_driver_reproducible_bitwise():
    d1 = simulate_driver(seed=7, dt=1e-3, n=500)
    d2 = simulate_driver(seed=7, dt=1e-3, n=500)
    assert np.array_equal(d1.btilde, d2.btilde)


def test_driver_seeds_differ():
    d1 = simulate_driver(seed=1, dt=1e-3, n=50)
    d2 = simulate_driver(seed=2, dt=1e-3, n=50)
    assert not np.array_equal(d1.btilde, d2.btilde)


def test_driver_increment_variance():
    d = simulate_driver(seed=0, dt=0.25, n=200000)
    inc = np.diff(d.btilde)
    assert abs(np.var(inc) - 0.25) < 0.01


@pytest.mark.parametrize("bad", [0.0, -1e-3])
def test_driver_rejects_bad_dt(bad):
    with pytest.raises(ParameterError):
        simulate_driver(seed=0, dt=bad, n=10)


def test_driver_rejects_bad_n():
    with pytest.raises(ParameterError):
        simulate_driver(seed=0, dt=1e-3, n=0)


def test_mu_process_rejects_nonpositive_mu():
    d = simulate_driver(seed=0, dt=1e-3, n=10)
    for mu in (0.0, -1.0):
        with pytest.raises(ParameterError):
            build_mu_process(d, mu)


@given(seed=st.integers(0, 2 ** 32 - 1),
       mu=st.floats(0.1, 5.0, allow_nan=False))
@settings(max_examples=30, deadline=None)
def test_mu_process_lower_bound(seed, mu):
    # X = |B| - mu L >= -mu L pathwise, and L = smax is nondecreasing
    d = simulate_driver(seed=seed, dt=1e-3, n=400)
    p = build_mu_process(d, mu)
    assert np.all(p.x >= -mu * p.lt_zero_b - 1e-12)
    assert np.all(np.diff(p.lt_zero_b) >= 0.0)


@given(seed=st.integers(0, 2 ** 32 - 1))
@settings(max_examples=30, deadline=None)
def test_mu_one_is_reflected_minus_local_time(seed):
    # for mu = 1 the representation collapses to X = -Btilde
    d = simulate_driver(seed=seed, dt=1e-3, n=200)
    p = build_mu_process(d, 1.0)
    assert np.allclose(p.x, -d.btilde)


def test_inf_run_is_running_minimum():
    d = simulate_driver(seed=3, dt=1e-3, n=300)
    p = build_mu_process(d, 2.0)
    assert np.array_equal(p.inf_run, np.minimum.accumulate(p.x))


def test_absolute_value_representation():
    # |B| = smax - btilde must be nonnegative
    d = simulate_driver(seed=5, dt=1e-3, n=1000)
    assert np.all(d.smax - d.btilde >= 0.0)


def test_hitting_time_interpolates():
    d = simulate_driver(seed=9, dt=1e-3, n=5000)
    p = build_mu_process(d, 2.0)
    r = -0.3
    t = hitting_time(p, r)
    assert t.reached
    # crossing bracketed by the step endpoints
    lo, hi = sorted((p.x[t.step], p.x[t.step + 1]))
    assert lo <= r <= hi
    # everything strictly before stays on the starting side
    assert np.all(p.x[:t.step + 1] > r)


def test_hitting_time_not_reached():
    d = simulate_driver(seed=9, dt=1e-3, n=10)
    p = build_mu_process(d, 2.0)
    assert hitting_time(p, -50.0) is NOT_REACHED


def test_hitting_time_at_start():
    d = simulate_driver(seed=9, dt=1e-3, n=10)
    p = build_mu_process(d, 2.0)
    t = hitting_time(p, 0.0)
    assert t.step == 0 and t.frac == 0.0


def test_sgn_b_increments_are_minus_driver_increments():
    d = simulate_driver(seed=11, dt=1e-3, n=100)
    assert np.array_equal(sgn_b_increments(d), -np.diff(d.btilde))


def test_time_index_validation():
    with pytest.raises(ParameterError):
        TimeIndex(step=0, frac=1.0)
    assert TimeIndex(step=3, frac=0.5).time(0.1) == pytest.approx(0.35)
    assert not NOT_REACHED.reached
