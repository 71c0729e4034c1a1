"""Predictor tests: error window behaviour, Pearson correlation against a
two-pass covariance oracle, and the blend mixing rule.
"""

import math
import random

import pytest
from hypothesis import given, strategies as st

from resroute.predictor import ErrorWindow, blend


def pearson_oracle(ys):
    """Two-pass covariance formula over (index, value) pairs, index from 1."""
    n = len(ys)
    if n < 2:
        return 0.0
    xs = range(1, n + 1)
    mx = sum(xs) / n
    my = sum(ys) / n
    sxy = sum((x - mx) * (y - my) for x, y in zip(xs, ys))
    sxx = sum((x - mx) ** 2 for x in xs)
    syy = sum((y - my) ** 2 for y in ys)
    if sxx == 0 or syy == 0:
        return 0.0
    return sxy / math.sqrt(sxx * syy)


# -- window behaviour ---------------------------------------------------------

def test_window_evicts_oldest_beyond_capacity():
    win = ErrorWindow(capacity=3)
    for v in [1.0, 2.0, 3.0, 4.0]:
        win.record_sample(v)
    assert win.samples() == [2.0, 3.0, 4.0]
    assert len(win) == 3


def test_window_rejects_nonfinite():
    win = ErrorWindow()
    with pytest.raises(ValueError):
        win.record_sample(float("nan"))


def test_reindexing_on_read():
    # After eviction the x axis restarts at 1, so a perfectly linear tail
    # keeps r == 1 regardless of how many samples were dropped.
    win = ErrorWindow(capacity=4)
    for v in range(10):
        win.record_sample(float(v))
    assert win.pearson_r() == pytest.approx(1.0, rel=1e-12)


# -- correlation --------------------------------------------------------------

def test_pearson_empty_and_single_sample_are_zero():
    win = ErrorWindow()
    assert win.pearson_r() == 0.0
    win.record_sample(5.0)
    assert win.pearson_r() == 0.0


def test_pearson_constant_samples_zero_variance():
    win = ErrorWindow()
    for _ in range(10):
        win.record_sample(7.5)
    assert win.pearson_r() == 0.0


def test_pearson_increasing_is_one():
    win = ErrorWindow()
    for v in [1.0, 2.0, 3.0]:
        win.record_sample(v)
    assert win.pearson_r() == pytest.approx(1.0, rel=1e-12)


def test_pearson_decreasing_is_minus_one():
    win = ErrorWindow()
    for v in [3.0, 2.0, 1.0]:
        win.record_sample(v)
    assert win.pearson_r() == pytest.approx(-1.0, rel=1e-12)


def test_pearson_known_value():
    # Samples 1, 2, 2 give r = 1 / sqrt(4/3) = sqrt(3)/2.
    win = ErrorWindow()
    for v in [1.0, 2.0, 2.0]:
        win.record_sample(v)
    assert win.pearson_r() == pytest.approx(math.sqrt(3) / 2, rel=1e-12)


def test_pearson_random_windows_match_oracle():
    rng = random.Random(7)
    for _ in range(300):
        n = rng.randint(2, 60)
        ys = [rng.uniform(-500, 500) for _ in range(n)]
        win = ErrorWindow()
        for y in ys:
            win.record_sample(y)
        assert win.pearson_r() == pytest.approx(pearson_oracle(ys), rel=1e-12, abs=1e-12)


@given(
    st.lists(st.floats(-100, 100), min_size=2, max_size=60),
    st.floats(0.1, 10.0),
    st.floats(-50, 50),
)
def test_pearson_affine_invariance(ys, a, b):
    # r is unchanged by positive affine transforms of the samples.
    win1, win2 = ErrorWindow(), ErrorWindow()
    for y in ys:
        win1.record_sample(y)
        win2.record_sample(a * y + b)
    # Float conditioning of a*y + b puts exact equality out of reach; the
    # coefficient itself is scale-free so a modest absolute band suffices.
    assert win1.pearson_r() == pytest.approx(win2.pearson_r(), abs=1e-6)


@given(st.lists(st.floats(-1000, 1000), min_size=0, max_size=60))
def test_pearson_bounded(ys):
    win = ErrorWindow()
    for y in ys:
        win.record_sample(y)
    assert -1.0 - 1e-12 <= win.pearson_r() <= 1.0 + 1e-12


# -- blend ---------------------------------------------------------------------

@pytest.mark.parametrize(
    "r,expected",
    [(0.0, 10.0), (1.0, 20.0), (-1.0, 10.0), (0.5, 15.0), (-0.5, 15.0)],
)
def test_blend_examples(r, expected):
    assert blend(r, 10.0, 20.0) == pytest.approx(expected, rel=1e-12)


def test_blend_limits_toward_zero():
    # r -> 0- tends to t_cur; r == 0 returns t_lpf exactly (the stated jump).
    assert blend(-1e-12, 10.0, 20.0) == pytest.approx(20.0, abs=1e-9)
    assert blend(1e-12, 10.0, 20.0) == pytest.approx(10.0, abs=1e-9)
    assert blend(0.0, 10.0, 20.0) == 10.0


@given(
    r=st.floats(-1.0, 1.0),
    t_lpf=st.floats(0.0, 1e5),
    t_cur=st.floats(0.0, 1e5),
)
def test_blend_stays_within_input_range(r, t_lpf, t_cur):
    lo, hi = sorted((t_lpf, t_cur))
    assert lo - 1e-9 <= blend(r, t_lpf, t_cur) <= hi + 1e-9


def test_blend_rejects_out_of_range_r():
    with pytest.raises(ValueError):
        blend(1.5, 10.0, 20.0)
    with pytest.raises(ValueError):
        blend(float("nan"), 10.0, 20.0)
