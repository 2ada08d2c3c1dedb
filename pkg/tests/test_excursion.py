import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from muprocess.excursion import (SIDE_ABOVE, SIDE_BELOW,
                                 decomposition_residual, glue,
                                 independence_test,
                                 occupation_above_functional,
                                 occupation_below_functional, reconstruct,
                                 simulate_until_clocks)
from muprocess.paths import (ParameterError, build_mu_process,
                             simulate_driver)


def make(seed=0, dt=1e-3, n=4000, mu=2.0):
    d = simulate_driver(seed, dt, n)
    return d, build_mu_process(d, mu)


@given(seed=st.integers(0, 2 ** 32 - 1),
       x=st.floats(-1.0, 0.0, allow_nan=False))
@settings(max_examples=25, deadline=None)
def test_glue_round_trip_exact(seed, x):
    _, p = make(seed=seed, n=500)
    below = glue(p, x, SIDE_BELOW)
    above = glue(p, x, SIDE_ABOVE)
    assert np.array_equal(reconstruct(below, above), p.x)


@given(seed=st.integers(0, 2 ** 32 - 1),
       x=st.floats(-1.0, 0.0, allow_nan=False))
@settings(max_examples=25, deadline=None)
def test_clock_additivity_exact(seed, x):
    _, p = make(seed=seed, n=500)
    below = glue(p, x, SIDE_BELOW)
    above = glue(p, x, SIDE_ABOVE)
    assert below.clock + above.clock == pytest.approx(p.n * p.dt, abs=1e-12)


def test_glue_partitions_by_value():
    _, p = make(n=300)
    below = glue(p, -0.2, SIDE_BELOW)
    above = glue(p, -0.2, SIDE_ABOVE)
    assert np.all(below.values <= -0.2)
    assert np.all(above.values > -0.2)
    assert below.back_map.size + above.back_map.size == p.n + 1


def test_glue_rejects_bad_side():
    _, p = make(n=10)
    with pytest.raises(ParameterError):
        glue(p, 0.0, "sideways")


def test_reconstruct_rejects_mismatched_levels():
    _, p = make(n=50)
    with pytest.raises(ParameterError):
        reconstruct(glue(p, -0.1, SIDE_BELOW), glue(p, -0.2, SIDE_ABOVE))


def test_reconstruct_rejects_different_sources():
    _, p1 = make(seed=1, n=50)
    _, p2 = make(seed=2, n=50)
    with pytest.raises(ParameterError):
        reconstruct(glue(p1, -0.1, SIDE_BELOW), glue(p2, -0.1, SIDE_ABOVE))


@pytest.mark.parametrize("side", [SIDE_ABOVE, SIDE_BELOW])
def test_decomposition_residual_shrinks_with_dt(side):
    # the glued semimartingale decomposition holds up to discretization
    def max_resid(dt, n):
        out = []
        for seed in range(30):
            d, p = make(seed=seed, dt=dt, n=n, mu=2.0)
            g = glue(p, -0.3, side)
            r = decomposition_residual(g, d, 2.0)
            out.append(np.max(np.abs(r)) if r.size else 0.0)
        return np.median(out)
    coarse = max_resid(1e-2, 1000)
    fine = max_resid(1e-4, 100000)
    assert fine < coarse
    assert fine < 0.2


def test_independence_test_detects_dependence():
    paths = [make(seed=s, n=800)[1] for s in range(200)]
    same = occupation_below_functional(0.1, 0.2)
    rep = independence_test(paths, -0.3, same,
                            lambda g: same(glue(g.source, -0.3, SIDE_BELOW)))
    assert not rep.passed
    assert rep.statistic == pytest.approx(1.0)


def test_independence_test_zero_variance_inconclusive():
    paths = [make(seed=s, n=50)[1] for s in range(20)]
    rep = independence_test(paths, -0.3, lambda g: 1.0, lambda g: g.clock)
    assert not rep.passed
    assert "inconclusive" in rep.metadata


def test_simulate_until_clocks_extends_both_sides():
    u0 = 0.3
    p = simulate_until_clocks(seed=17, mu=2.0, x=-0.5, dt=1e-3, u0=u0)
    below = glue(p, -0.5, SIDE_BELOW)
    above = glue(p, -0.5, SIDE_ABOVE)
    assert below.clock >= u0
    assert above.clock >= u0


def test_simulate_until_clocks_matches_plain_driver():
    # the extension draws the same increments as a single plain run
    p = simulate_until_clocks(seed=23, mu=1.0, x=-0.2, dt=1e-3, u0=0.05,
                              chunk_steps=100)
    d = simulate_driver(23, 1e-3, p.n)
    assert np.allclose(p.x, build_mu_process(d, 1.0).x)


def test_simulate_until_clocks_cap_returns_none():
    out = simulate_until_clocks(seed=3, mu=2.0, x=-0.5, dt=1e-3, u0=10.0,
                                chunk_steps=50, max_steps=100)
    assert out is None


def test_occupation_functionals_bounded_by_horizon():
    _, p = make(n=2000)
    g = glue(p, -0.5, SIDE_BELOW)
    val = occupation_below_functional(0.2, 0.5)(g)
    assert 0.0 <= val <= 0.5 + 1e-12
    g2 = glue(p, -0.5, SIDE_ABOVE)
    val2 = occupation_above_functional(0.2, 0.5)(g2)
    assert 0.0 <= val2 <= 0.5 + 1e-12
