import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from dpcoupling.bounds import (
    BoundInputs,
    DomainError,
    f_r,
    f_r_heuristic,
    f_r_inverse,
    lemma1_approx,
    lemma1_x,
    onlypub_threshold,
    regime_report,
    theorem2_threshold,
    threshold_level,
    xi_dominant_comparison,
)


def unit(**kw):
    # sigma = 1, d = 100, B = 10 gives sigma^2 d / B^2 = 1
    base = dict(smoothness=1.0, loss0=1.0, xi=1.0, batch=10, d=100, c=0.1, iterations=10_000, sigma=1.0)
    base.update(kw)
    return BoundInputs(**base)


def test_noise_ratio_and_coefficients():
    inp = unit()
    assert inp.noise_ratio == 1.0
    assert inp.a_pub == 0.5
    assert inp.a_priv == 0.5


def test_f_r_hand_value():
    assert f_r(1.0, 2.0, unit()) == pytest.approx(0.5625, abs=1e-12)


def test_f_r_zero_and_large_r():
    inp = unit()
    assert f_r(0.0, 3.0, inp) == 0.0
    g = 0.7
    assert f_r(g, 1e6, inp) == pytest.approx(inp.a_pub * g * g, rel=1e-4)


def test_f_r_rejects_small_r():
    with pytest.raises(ValueError):
        f_r(1.0, 1.0, unit())


def test_heuristic_hand_value():
    assert f_r_heuristic(1.0, unit()) == pytest.approx(0.5 + 1 / 15.75, abs=1e-14)
    assert f_r_heuristic(0.0, unit()) == 0.0


def test_heuristic_matches_literal_displays():
    inp = unit(xi=0.8, loss0=0.6, smoothness=2.0)
    s, L, L0, xi = inp.noise_ratio, inp.smoothness, inp.loss0, inp.xi
    for g in (0.1, 0.5, 1.2):
        k15 = g * g / (2 * L) + math.sqrt(2 * L0 / (L * (1 + s))) * g * g / (3 * ((1.5 * xi + 1) ** 2 - g * g))
        k2 = g * g / (2 * L) + math.sqrt(L0 / (2 * L * (1 + s))) * g * g / ((2 * xi + 1) ** 2 - g * g)
        assert f_r_heuristic(g, inp) == pytest.approx(k15, rel=1e-13)
        assert f_r_heuristic(g, inp, k=2.0) == pytest.approx(k2, rel=1e-13)


@given(st.floats(0.01, 0.99), st.sampled_from([1.5, 2.0]))
def test_heuristic_is_general_form_at_r_k_xi_over_g(frac, k):
    inp = unit(xi=2.0)
    g = frac * k * inp.xi  # keeps r = k xi / g > 1
    assert f_r_heuristic(g, inp, k) == pytest.approx(f_r(g, k * inp.xi / g, inp), rel=1e-12)


def test_heuristic_domain():
    with pytest.raises(DomainError, match="2.5"):
        f_r_heuristic(2.5, unit())


def test_heuristic_monotone_in_g_and_sigma():
    inp = unit()
    g = np.linspace(0, 2.49, 500)
    vals = [f_r_heuristic(v, inp) for v in g]
    assert all(b > a for a, b in zip(vals, vals[1:]))
    by_sigma = [f_r_heuristic(1.0, unit(sigma=s)) for s in (0.5, 1.0, 2.0, 8.0)]
    assert all(b < a for a, b in zip(by_sigma, by_sigma[1:]))


def test_inverse_hand_value():
    assert f_r_inverse(0.5 + 1 / 15.75, unit()) == pytest.approx(1.0, abs=1e-9)
    assert f_r_inverse(0.563492, unit()) == pytest.approx(1.0, abs=1e-6)
    assert f_r_inverse(0.0, unit()) == 0.0


@pytest.mark.parametrize("k", [1.5, 2.0])
def test_inverse_roundtrip_log_grid(k):
    inp = unit()
    for y in np.logspace(-8, 4, 60):
        g = f_r_inverse(y, inp, k)
        assert f_r_heuristic(g, inp, k) == pytest.approx(y, rel=1e-8)


def test_inverse_rejects_above_supremum():
    inp = unit(loss0=0.0)  # no private term, finite supremum A_pub * pole^2
    with pytest.raises(DomainError):
        f_r_inverse(0.5 * 2.5**2, inp)


def test_threshold_scaling():
    y1 = threshold_level(unit(iterations=10_000))
    y2 = threshold_level(unit(iterations=20_000))
    assert y1 / y2 == pytest.approx(math.sqrt(2), rel=1e-14)
    th = [theorem2_threshold(unit(iterations=t)).g_norm_bound for t in (10**2, 10**4, 10**8, 10**14)]
    assert all(b < a for a, b in zip(th, th[1:]))
    assert th[-1] < 1e-2  # decays like T^(-1/4)


def test_sigma_resolved_from_accountant():
    inp = BoundInputs(1.0, 1.0, 1.0, 100, 10**4, 0.1, 10**4, n_priv=1000, mu=1.0)
    assert inp.noise_multiplier == pytest.approx(10.0249274714, rel=1e-9)
    with pytest.raises(ValueError):
        BoundInputs(1.0, 1.0, 1.0, 100, 10**4, 0.1, 10**4, sigma=1.0, n_priv=1000, mu=1.0)
    with pytest.raises(ValueError):
        BoundInputs(1.0, 1.0, 1.0, 100, 10**4, 0.1, 10**4)


def test_lemma1_public_limit_hand_value():
    inp = BoundInputs(1.0, 1.0, 1e-4, 1, 10, 0.04, 10**4, n_priv=100, mu=0.0)
    assert lemma1_x(inp) == 0.0
    assert lemma1_approx(inp) == pytest.approx(1.0, abs=1e-8)


def test_lemma1_decreases_with_mu_and_n():
    def mk(mu, n):
        return BoundInputs(1.0, 1.0, 1.0, 100, 10**4, 0.1, 10**6, n_priv=n, mu=mu)
    assert lemma1_approx(mk(2.0, 1000)) < lemma1_approx(mk(1.0, 1000))
    assert lemma1_approx(mk(1.0, 2000)) < lemma1_approx(mk(1.0, 1000))


def test_lemma1_warns_outside_regime():
    inp = BoundInputs(1.0, 1.0, 0.1, 100, 10, 0.1, 100, n_priv=10**5, mu=5.0)
    assert lemma1_x(inp) > 1
    with pytest.warns(UserWarning):
        lemma1_approx(inp)


@pytest.mark.parametrize("case", [
    dict(smoothness=1.0, loss0=1.0, xi=1.0, batch=100, d=10**4, c=0.1, n_priv=1000, mu=1.0),
    dict(smoothness=1.0, loss0=1.0, xi=1.0, batch=10, d=1000, c=0.5, n_priv=10**4, mu=0.5),
    dict(smoothness=2.0, loss0=0.5, xi=3.0, batch=50, d=500, c=0.2, n_priv=5000, mu=2.0),
])
@pytest.mark.parametrize("k", [1.5, 2.0])
def test_lemma1_agreement_improves_with_T(case, k):
    gaps = []
    for T in (10**4, 10**6, 10**8):
        inp = BoundInputs(iterations=T, **case)
        assert lemma1_x(inp) <= 0.3
        num = theorem2_threshold(inp, k).g_norm_bound
        gaps.append(abs(lemma1_approx(inp) - num) / num)
    assert gaps[0] > gaps[1] > gaps[2]


def test_onlypub_hand_value_and_scaling():
    inp = unit(batch=1, xi=1.0, c=0.1, iterations=10**4)
    assert onlypub_threshold(inp) == pytest.approx(0.3, rel=1e-14)
    assert onlypub_threshold(unit(iterations=40_000)) == pytest.approx(onlypub_threshold(unit()) / 2, rel=1e-14)


def test_xi_dominant_ratio_is_one_minus_x():
    inp = BoundInputs(1.0, 1.0, 5.0, 100, 10**4, 0.1, 10**6, n_priv=10**5, mu=1.0)
    coupled, pub = xi_dominant_comparison(inp)
    assert coupled / pub == pytest.approx(1 - lemma1_x(inp), rel=1e-14)


@given(st.floats(0.01, 5.0), st.integers(10, 10**6), st.floats(0.1, 10))
def test_coupled_beats_public_when_x_in_unit_interval(mu, n, xi):
    inp = BoundInputs(1.0, 1.0, xi, 10, 1000, 0.1, 10**6, n_priv=max(n, 10), mu=mu)
    x = lemma1_x(inp)
    coupled, pub = xi_dominant_comparison(inp)
    if 0 < x < 1:
        assert coupled < pub


def test_regime_report_confirms_guidelines():
    base = BoundInputs(1.0, 1.0, 1.0, 100, 10**4, 0.1, 10**5, n_priv=10**4, mu=1.0)
    rows, verdicts = regime_report(
        base,
        iterations=[10**4, 10**5, 10**6],
        batches=[10, 100, 1000],
        xis=[0.5, 1.0, 2.0],
        mu_n=[(0.5, 10**4), (1.0, 10**4), (1.0, 2 * 10**4)],
    )
    assert verdicts == {"iterations": True, "batch": True, "xi": True, "mu_n": True}
    batch_rows = [r for r in rows if r.axis == "batch"]
    xi_terms = [1.0 / r.value for r in batch_rows]
    assert all(b < a for a, b in zip(xi_terms, xi_terms[1:]))
    with pytest.raises(ValueError):
        regime_report(unit())
