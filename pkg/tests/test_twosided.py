import numpy as np
import pytest

from muprocess.paths import ParameterError
from muprocess.twosided import (TwoSidedPath, simulate_two_sided,
                                verify_main_bis, wr_integral_pair)
from muprocess.whitenoise import Rect, StepFunction2D


def make(seed=0, dt=1e-3, mu=2.0, r_max=1.0, forward_steps=20000):
    return simulate_two_sided(seed, dt, mu, r_max, forward_steps)


def test_splice_structure():
    p = make()
    v = p.values()
    t = p.times()
    assert v[p.splice_index] == 0.0       # forward side starts at 0
    assert t[p.splice_index] == 0.0
    assert t[0] == -p.dt * p.descent_values.size
    assert v.size == t.size == p.descent_values.size + p.forward.n + 1


def test_descent_is_positive_and_exceeds_r_max_initially():
    p = make(seed=5)
    assert np.all(p.descent_values > 0.0)
    # simulation ran until the untracked past stays above r_max
    assert p.descent_values[0] > p.r_max


def test_descent_reproducible():
    p1 = make(seed=7)
    p2 = make(seed=7)
    assert np.array_equal(p1.descent_values, p2.descent_values)
    assert np.array_equal(p1.forward.x, p2.forward.x)


def test_increments_align_with_values():
    p = make(seed=1)
    inc = p.increments()
    assert inc.size == p.values().size - 1


def test_hitting_index_finds_levels():
    p = make(seed=2)
    i = p.hitting_index(0.5)
    assert i >= 0
    v = p.values()
    lo, hi = sorted((v[i], v[i + 1]))
    assert lo <= 0.5 <= hi
    assert p.hitting_index(1e9) == -1


def test_rejects_bad_r_max():
    with pytest.raises(ParameterError):
        simulate_two_sided(0, 1e-3, 1.0, 0.0, 100)


def test_descent_cap_raises():
    with pytest.raises(ParameterError):
        simulate_two_sided(0, 1e-3, 1.0, 50.0, 100, cap_time=0.1)


def test_wr_integral_pair_exact_equality():
    # shifted and global slab integrals below r are the same Ito sum
    p = make(seed=3)
    dx = 0.05
    g = StepFunction2D((Rect(0.0, 2.0, -0.5, -2 * dx),))
    r = 0.5
    shifted, global_ = wr_integral_pair(p, g, r, dx)
    assert shifted == global_


def test_wr_integral_pair_rejects_high_support():
    p = make(seed=3)
    g = StepFunction2D((Rect(0.0, 2.0, -0.5, 0.5),))
    with pytest.raises(ParameterError):
        wr_integral_pair(p, g, 0.5, 0.05)


def test_verify_main_bis_smoke():
    rep = verify_main_bis(1.0, 0.3, 0.5, [0.2], 40, 1e-3, master_seed=5)
    assert rep.name == "two-sided-identities"
    m = rep.metadata
    assert m["discard_fraction"] <= 0.1
    # mean of L(tau_a^r, r+h) near a + 2h/mu even at this desk scale
    assert abs(m["mean"] - m["mean_target"]) < 0.3
    assert np.isfinite(m["median_residual_up"])


def test_verify_main_bis_rejects_bad_a():
    with pytest.raises(ParameterError):
        verify_main_bis(1.0, 0.0, -1.0, [0.2], 10, 1e-3)
