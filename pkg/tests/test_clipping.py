import numpy as np
import pytest
from hypothesis import given, strategies as st

from dpcoupling.clipping import ClipRule, clip_batch, clip_factor, quantile_threshold
from dpcoupling.models import PerSampleGradients


def psg(G):
    G = np.asarray(G, dtype=float)
    return PerSampleGradients(G, np.zeros(len(G)), np.arange(len(G)))


def test_automatic_factor_values():
    assert clip_factor(ClipRule.automatic(), 1.0) == 0.5
    assert clip_factor(ClipRule.automatic(), 0.0) == 1.0


def test_flat_factor():
    rule = ClipRule.flat(1.0)
    assert clip_factor(rule, 4.0) == 0.25
    assert clip_factor(rule, 4.0) * 4.0 == 1.0
    assert clip_factor(rule, 0.0) == 1.0
    assert clip_factor(rule, 0.5) == 1.0


def test_identity_factor():
    assert clip_factor(ClipRule.identity(), 123.0) == 1.0


def test_quantile_nearest_rank():
    assert quantile_threshold(np.arange(1, 11), 0.9) == 9
    assert quantile_threshold([3.0] * 7, 0.37) == 3.0
    assert quantile_threshold([2.5], 0.1) == 2.5
    with pytest.raises(ValueError):
        quantile_threshold([], 0.5)


@given(st.lists(st.floats(0, 1e6), min_size=1, max_size=50), st.floats(0.01, 0.99))
def test_quantile_is_member(norms, q):
    assert quantile_threshold(norms, q) in norms


def test_identity_batch_is_row_sum():
    G = np.array([[1.0, 2.0], [3.0, -1.0], [0.5, 0.5]])
    out = clip_batch(psg(G), ClipRule.identity())
    np.testing.assert_array_equal(out.total, G[0] + G[1] + G[2])


def test_automatic_clipped_rows_below_one():
    rs = np.random.default_rng(0)
    G = rs.standard_normal((20, 4)) * rs.uniform(0, 50, (20, 1))
    out = clip_batch(psg(G), ClipRule.automatic())
    n = np.linalg.norm(G, axis=1)
    np.testing.assert_allclose(out.factors * n, n / (n + 1))
    assert np.all(out.factors * n < 1)
    assert out.threshold == 1.0


def test_opposite_gradients_cancel():
    g = np.array([3.0, -4.0])
    for rule in (ClipRule.automatic(), ClipRule.flat(1.0), ClipRule.identity()):
        np.testing.assert_array_equal(clip_batch(psg([g, -g]), rule).total, [0.0, 0.0])


def test_adaptive_quantile_applies_batch_threshold():
    G = np.diag(np.arange(1.0, 11.0))  # row norms 1..10
    out = clip_batch(psg(G), ClipRule.adaptive_quantile(0.9))
    assert out.threshold == 9.0
    clipped = np.linalg.norm(G * out.factors[:, None], axis=1)
    np.testing.assert_allclose(clipped, np.minimum(np.arange(1.0, 11.0), 9.0))


def test_adaptive_quantile_falls_back_on_zero_threshold():
    out = clip_batch(psg(np.zeros((3, 2))), ClipRule.adaptive_quantile(0.5, fallback=2.0))
    assert out.threshold == 2.0


def test_clipped_sum_sequential_order():
    rs = np.random.default_rng(1)
    G = rs.standard_normal((50, 3)) * 1e3
    out = clip_batch(psg(G), ClipRule.flat(1.0))
    acc = np.zeros(3)
    for row, f in zip(G, out.factors):
        acc = acc + f * row
    np.testing.assert_array_equal(out.total, acc)


@pytest.mark.parametrize("text,expected", [
    ("automatic", ClipRule.automatic()),
    ("identity", ClipRule.identity()),
    ("flat:2.5", ClipRule.flat(2.5)),
    ("quantile:0.9", ClipRule.adaptive_quantile(0.9)),
])
def test_parse(text, expected):
    assert ClipRule.parse(text) == expected
    assert ClipRule.parse(str(expected)) == expected


@pytest.mark.parametrize("text", ["flat", "flat:-1", "quantile:1.5", "auto", "identity:3"])
def test_parse_rejects(text):
    with pytest.raises(ValueError):
        ClipRule.parse(text)


def test_boundedness_random_gradients():
    rs = np.random.default_rng(2024)
    G = rs.standard_normal((10_000, 8)) * np.exp(rs.uniform(-6, 6, (10_000, 1)))
    n = np.linalg.norm(G, axis=1)
    auto = clip_batch(psg(G), ClipRule.automatic())
    assert np.all(np.linalg.norm(G * auto.factors[:, None], axis=1) < 1)
    R = 0.7
    flat = clip_batch(psg(G), ClipRule.flat(R))
    c = np.linalg.norm(G * flat.factors[:, None], axis=1)
    assert np.all(c <= R * (1 + 1e-15))
    np.testing.assert_allclose(c[n >= R], R, rtol=1e-15)
