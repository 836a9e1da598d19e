import math

import numpy as np
import pytest

from dpcoupling import accountant, rng
from dpcoupling.alpha_solver import NonConvexAlphaInputs, corollary_alpha
from dpcoupling.clipping import ClipRule
from dpcoupling.data import Dataset
from dpcoupling.models import ModelSpec, Problem, init_params, per_sample_grads
from dpcoupling.optimizer import (
    AlphaContext,
    AlphaSchedule,
    CouplingConfig,
    DivergenceError,
    TrainState,
    alpha_at,
    coupled_step,
    noise_draw,
    read_metrics_csv,
    train,
    write_metrics_csv,
)


def _problem(n_pub=60, n_priv=240, kind="logistic", seed=0, test=True):
    rs = np.random.default_rng(seed)
    n = n_pub + n_priv + 100
    X = rs.standard_normal((n, 6))
    if kind == "least_squares":
        y = X @ rs.standard_normal(6) + 0.1 * rs.standard_normal(n)
    else:
        y = (X[:, 0] + 0.5 * rs.standard_normal(n) > 0).astype(float)
    ds = Dataset(X, y)
    return Problem(ModelSpec(kind, 6), ds.subset(range(n_pub)), ds.subset(range(n_pub, n_pub + n_priv)),
                   ds.subset(range(n_pub + n_priv, n)) if test else None)


def loop_sum(G):
    s = np.zeros(G.shape[1])
    for row in G:
        s = s + row
    return s


# --- schedules ---

def test_alpha_schedules():
    T = 100
    assert alpha_at(AlphaSchedule.dpmd(K=50), 0, T) == 0.0
    assert alpha_at(AlphaSchedule.dpmd(K=50), 50, T) == pytest.approx(1.0, abs=1e-15)
    assert alpha_at(AlphaSchedule.dpmd(K=50), 80, T) == 1.0
    assert alpha_at(AlphaSchedule("sample_ratio"), 3, T, AlphaContext(1000, 4000)) == 0.2
    assert alpha_at(AlphaSchedule.constant(0.3), 7, T) == 0.3
    assert alpha_at(AlphaSchedule("only_pub"), 7, T) == 1.0
    assert alpha_at(AlphaSchedule("only_priv"), 7, T) == 0.0
    inp = NonConvexAlphaInputs(100, 1.0, 1.0, 1.0, 10**6)
    assert alpha_at(AlphaSchedule.corollary(inp), 40, T) == corollary_alpha(inp)


def test_alpha_schedule_errors():
    with pytest.raises(ValueError):
        alpha_at(AlphaSchedule("sample_ratio"), 0, 10)
    with pytest.raises(ValueError):
        alpha_at(AlphaSchedule("corollary"), 0, 10)
    with pytest.raises(ValueError):
        alpha_at(AlphaSchedule.constant(0.5), 11, 10)
    with pytest.raises(ValueError):
        AlphaSchedule.constant(1.5)
    with pytest.raises(ValueError):
        AlphaSchedule("cosine")


def test_dpmd_clamped_everywhere():
    s = AlphaSchedule.dpmd(K=7)
    vals = [alpha_at(s, t, 40) for t in range(41)]
    assert all(0 <= v <= 1 for v in vals)
    assert all(b >= a for a, b in zip(vals, vals[1:]))


# --- noise ---

def test_noise_zero_and_deterministic():
    assert np.all(noise_draw(1, 5, 10, 0.0, 1.0) == 0)
    assert np.array_equal(noise_draw(1, 5, 10, 1.3, 0.7), noise_draw(1, 5, 10, 1.3, 0.7))
    assert not np.array_equal(noise_draw(1, 5, 10, 1.0, 1.0), noise_draw(1, 6, 10, 1.0, 1.0))


def test_noise_variance_statistical():
    z = noise_draw(11, 0, 10**6, 1.5, 2.0)
    assert np.var(z) == pytest.approx(9.0, rel=0.01)
    assert abs(np.mean(z)) < 5 * 3.0 / 1000


def test_noise_independent_of_batch_contents():
    p1, p2 = _problem(seed=0), _problem(seed=1)
    cfg = CouplingConfig(eta=0.01, schedule=AlphaSchedule.constant(0.5), sigma=1.0, batch=10)
    params = init_params(p1.spec, 0)
    st = TrainState(params, step=9, seed=42)
    outs = []
    for p in (p1, p2):
        pub = per_sample_grads(p.spec, params, p.public, range(10))
        priv = per_sample_grads(p.spec, params, p.private, range(5, 15))
        outs.append(coupled_step(st, pub, priv, 0.5, cfg)[1].noise)
    assert np.array_equal(outs[0], outs[1])
    assert np.array_equal(outs[0], noise_draw(42, 9, p1.spec.dim, 1.0, 1.0))


# --- reductions ---

def test_alpha_one_is_public_sgd_bitwise():
    p = _problem()
    eta, B = 0.01, 10
    cfg = CouplingConfig(eta=eta, schedule=AlphaSchedule("only_pub"), sigma=3.0, batch=B)
    st = TrainState(init_params(p.spec, 0), seed=7)
    ref = st.params.copy()
    rs = np.random.default_rng(0)
    for t in range(100):
        pi, qi = rs.choice(len(p.public), B, replace=False), rs.choice(len(p.private), B, replace=False)
        pub = per_sample_grads(p.spec, st.params, p.public, pi)
        priv = per_sample_grads(p.spec, st.params, p.private, qi)
        st, _ = coupled_step(st, pub, priv, 1.0, cfg)
        ref = ref - eta * loop_sum(per_sample_grads(p.spec, ref, p.public, pi).grads)
        assert np.array_equal(st.params, ref)


def test_alpha_zero_identity_is_private_sgd_bitwise():
    p = _problem(kind="least_squares")
    eta, B = 0.005, 12
    cfg = CouplingConfig(eta=eta, schedule=AlphaSchedule("only_priv"), clip=ClipRule.identity(), sigma=0.0, batch=B)
    st = TrainState(init_params(p.spec, 0), seed=7)
    ref = st.params.copy()
    rs = np.random.default_rng(1)
    for t in range(100):
        pi, qi = rs.choice(len(p.public), B, replace=False), rs.choice(len(p.private), B, replace=False)
        pub = per_sample_grads(p.spec, st.params, p.public, pi)
        priv = per_sample_grads(p.spec, st.params, p.private, qi)
        st, _ = coupled_step(st, pub, priv, 0.0, cfg)
        ref = ref - eta * loop_sum(per_sample_grads(p.spec, ref, p.private, qi).grads)
        assert np.array_equal(st.params, ref)


def test_coupled_step_matches_display():
    p = _problem()
    cfg = CouplingConfig(eta=0.1, schedule=AlphaSchedule.constant(0.3), sigma=0.8, R=2.0,
                         clip=ClipRule.flat(2.0), batch=5)
    params = init_params(p.spec, 3)
    st = TrainState(params, step=4, seed=5)
    pub = per_sample_grads(p.spec, params, p.public, range(5))
    priv = per_sample_grads(p.spec, params, p.private, range(5))
    new, info = coupled_step(st, pub, priv, 0.3, cfg)
    n = priv.norms()
    clipped = (priv.grads * np.minimum(2.0 / n, 1.0)[:, None]).sum(0)
    z = rng.stream(5, rng.NOISE, 4).standard_normal(params.size)
    want = params - 0.1 * (0.3 * pub.grads.sum(0) + 0.7 * (clipped + 0.8 * 2.0 * z))
    np.testing.assert_allclose(new.params, want, rtol=1e-13, atol=1e-15)
    assert new.step == 5


def test_divergence_report():
    p = _problem(kind="least_squares")
    cfg = CouplingConfig(eta=1e300, schedule=AlphaSchedule.constant(0.25), sigma=0.0, batch=5)
    params = init_params(p.spec, 0) * 1e10
    pub = per_sample_grads(p.spec, params, p.public, range(5))
    with pytest.raises(DivergenceError, match=r"t=0.*eta=1e\+300.*alpha=0.25"):
        coupled_step(TrainState(params), pub, None, 0.25, cfg)


# --- training ---

def test_train_determinism_and_csv(tmp_path):
    p = _problem()
    cfg = CouplingConfig(eta=0.02, schedule=AlphaSchedule.constant(0.5), sigma=1.2, batch=20, epochs=3,
                         seed=9, warmup_epochs=1)
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    write_metrics_csv(train(p, cfg).rows, a)
    write_metrics_csv(train(p, cfg).rows, b)
    assert a.read_bytes() == b.read_bytes()
    rows = read_metrics_csv(a)
    assert a.read_text().splitlines()[0] == "epoch,step,alpha,eta,train_loss,test_loss,test_acc,grad_norm,snr,sigma,epsilon_spent"
    assert [r.epoch for r in rows] == [1, 2, 3, 4]
    assert rows[0].alpha == 1.0 and rows[0].epsilon_spent == 0.0
    eps = [r.epsilon_spent for r in rows]
    assert all(y >= x for x, y in zip(eps, eps[1:]))


def test_only_pub_never_touches_private():
    p = _problem()
    cfg = CouplingConfig(eta=0.02, schedule=AlphaSchedule("only_pub"), sigma=1.0, batch=20, epochs=2)
    res = train(p, cfg)
    assert res.touched["private"] == 0
    assert res.touched["public"] == 20 * res.total_steps
    assert all(r.epsilon_spent == 0.0 for r in res.rows)


def test_epsilon_bookkeeping_matches_accountant():
    p = _problem()
    sigma = accountant.sigma_for_mu(240, 20, 24, accountant.mu_from_epsilon(accountant.ApproxDpBudget(2.0, 1e-5)).mu)
    cfg = CouplingConfig(eta=0.02, schedule=AlphaSchedule("only_priv"), sigma=sigma, batch=20, epochs=2)
    res = train(p, cfg)
    assert res.total_steps == 24
    assert res.rows[-1].epsilon_spent == pytest.approx(2.0, rel=1e-9)


def test_sgd_curve_monotone_full_batch():
    p = _problem(kind="least_squares", n_priv=200)
    X = p.private.features
    L = np.linalg.eigvalsh(X.T @ X / len(X)).max()
    eta = 1.0 / (L * 200)  # summed reduction: eta < 2 / (L B)
    cfg = CouplingConfig(eta=eta, schedule=AlphaSchedule("only_priv"), clip=ClipRule.identity(), sigma=0.0,
                         batch=200, epochs=15)
    p = Problem(p.spec, p.public, p.private, None)
    rows = train(p, cfg).rows
    losses = [r.train_loss for r in rows]
    assert all(b < a for a, b in zip(losses, losses[1:]))
    assert math.isinf(rows[-1].snr)


def test_snr_logged_with_noise():
    p = _problem()
    cfg = CouplingConfig(eta=0.02, schedule=AlphaSchedule.constant(0.5), sigma=1.0, batch=20, epochs=1)
    r = train(p, cfg).rows[0]
    assert 0 < r.snr < math.inf


def test_train_errors():
    p = _problem(n_pub=5)
    with pytest.raises(ValueError):
        train(p, CouplingConfig(eta=0.1, schedule=AlphaSchedule.constant(0.5), batch=20))
    with pytest.raises(ValueError):
        CouplingConfig(eta=0.0, schedule=AlphaSchedule.constant(0.5))
