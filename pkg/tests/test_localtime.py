import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from muprocess.localtime import (default_dx, inverse_local_time,
                                 occupation_local_time, profile_at)
from muprocess.paths import (ParameterError, TimeIndex, build_mu_process,
                             simulate_driver)


def make_path(seed=0, dt=1e-3, n=2000, mu=1.0):
    return build_mu_process(simulate_driver(seed, dt, n), mu)


def test_default_dx_scaling():
    assert default_dx(1e-4) == pytest.approx(4e-2)
    assert default_dx(1e-4, ratio=2.0) == pytest.approx(2e-2)


@given(seed=st.integers(0, 2 ** 32 - 1))
@settings(max_examples=25, deadline=None)
def test_occupation_identity_exact(seed):
    # with a window covering the whole path, sum(counts) * dt == t exactly
    p = make_path(seed=seed, n=500)
    lo = float(np.min(p.x)) - 0.1
    hi = float(np.max(p.x)) + 0.1
    dx = default_dx(p.dt)
    m = int(np.ceil((hi - lo) / dx)) + 1
    f = occupation_local_time(p, lo, dx, m)
    stop = TimeIndex(step=p.n, frac=0.0)
    counts = f.counts_at(stop)
    assert counts.sum() * p.dt == pytest.approx(p.n * p.dt, abs=1e-12)
    assert f.truncated_fraction() == 0.0


def test_value_matches_dense_matrix():
    p = make_path(n=200)
    f = occupation_local_time(p, -0.5, 0.05, 20)
    dense = f.dense_values()
    for i in (0, 57, 200):
        for j in (0, 7, 19):
            assert f.value(i, j) == pytest.approx(dense[i, j])


def test_level_cumulative_matches_dense():
    p = make_path(n=300)
    f = occupation_local_time(p, -0.5, 0.05, 20)
    dense = f.dense_values()
    for j in (0, 10, 19):
        assert np.allclose(f.level_cumulative(j), dense[:, j])


def test_partial_step_weighting():
    p = make_path(n=100)
    f = occupation_local_time(p, -2.0, 0.1, 40)
    full = f.counts_at(TimeIndex(step=10, frac=0.0))
    part = f.counts_at(TimeIndex(step=10, frac=0.25))
    j = f.bin_idx[10]
    expect = full.copy()
    expect[j] += 0.25
    assert np.allclose(part, expect)


def test_truncation_fraction_counts_outside():
    p = make_path(n=500)
    # one-bin window around a single level keeps almost nothing
    f = occupation_local_time(p, 0.0, 0.01, 1)
    inside = np.count_nonzero(f.bin_idx == 0)
    assert f.truncated_fraction() == pytest.approx(1.0 - inside / p.n)
    assert "truncation_warning" in f.metadata


def test_bandwidth_warning():
    p = make_path(dt=1e-2)
    f = occupation_local_time(p, -1.0, 1e-3, 10)  # dx far below sqrt(dt)
    assert "bandwidth_warning" in f.metadata


def test_rejects_degenerate_grid():
    p = make_path(n=10)
    with pytest.raises(ParameterError):
        occupation_local_time(p, 0.0, 0.0, 5)
    with pytest.raises(ParameterError):
        occupation_local_time(p, 0.0, 0.1, 0)


def test_level_index_nearest_center():
    p = make_path(n=10)
    f = occupation_local_time(p, 0.0, 0.1, 10)
    assert f.level_index(0.05) == 0
    assert f.level_index(0.17) == 1
    assert f.level_index(5.0) == 9  # clamped
    assert f.centers[0] == pytest.approx(0.05)


def test_inverse_local_time_threshold():
    p = make_path(seed=4, dt=1e-3, n=20000, mu=1.0)
    dx = default_dx(p.dt)
    f = occupation_local_time(p, -dx / 2.0, dx, 1)  # bin centered at 0
    a = 0.05
    t = inverse_local_time(p, f, a, 0.0)
    assert t.reached
    # local time strictly before the stop is below a, at the stop above
    before = f.value(t.step, 0)
    after = f.value(t.step + 1, 0)
    assert before <= a <= after


def test_inverse_local_time_not_reached():
    p = make_path(n=100)
    f = occupation_local_time(p, -0.05, 0.1, 1)
    t = inverse_local_time(p, f, 1e9, 0.0)
    assert not t.reached


def test_profile_at_consistency():
    p = make_path(seed=2, n=1000)
    f = occupation_local_time(p, -1.0, 0.05, 40)
    stop = TimeIndex(step=600, frac=0.0)
    prof = profile_at(f, stop)
    assert prof.shape == (40,)
    # occupation formula: integral of the profile = time inside the window
    inside = np.count_nonzero((f.bin_idx[:600] >= 0) & (f.bin_idx[:600] < 40))
    assert prof.sum() * f.dx == pytest.approx(inside * p.dt)
