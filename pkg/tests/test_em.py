import itertools
import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import vonmises

from helpers import random_spd
from spamm.em import (
    EmConfig,
    ProxConfig,
    bessel_ratio,
    bic_select,
    em_fit,
    fixed_group_em,
    m_step_von_mises,
    m_step_wrapped,
    prox_em_fit,
    prox_l0_simplex,
    run_em,
)
from spamm.model import VON_MISES, WRAPPED_DIAG, WRAPPED_FULL, MixtureComponent, SparseMixtureModel
from spamm.samples import UnivariateWeightedSamples, WeightedSampleSet, wrap


# -- prox ---------------------------------------------------------------------------------------

def prox_oracle(alpha, gamma):
    """Exhaustive minimizer of |a - alpha|^2 / (2 gamma) + |a|_0 over the simplex.

    For a fixed support J the best simplex point adds the missing mass evenly
    to alpha_J, so it suffices to enumerate all nonempty supports.
    """
    a = np.asarray(alpha, dtype=float)
    K = a.size
    best = None
    for r in range(1, K + 1):
        for J in itertools.combinations(range(K), r):
            out = np.zeros(K)
            dropped = [i for i in range(K) if i not in J]
            out[list(J)] = a[list(J)] + a[dropped].sum() / r
            val = np.sum((out - a) ** 2) / (2 * gamma) + r
            if best is None or val < best[0] - 1e-15:
                best = (val, out, J)
    return best


def prox_objective(out, alpha, gamma):
    return np.sum((out - alpha) ** 2) / (2 * gamma) + np.count_nonzero(out)


@pytest.mark.parametrize("gamma", np.geomspace(1e-4, 10.0, 60))
def test_prox_matches_exhaustive_oracle(gamma):
    alpha = np.array([0.05, 0.15, 0.8])
    out, kept = prox_l0_simplex(alpha, gamma)
    val, want, J = prox_oracle(alpha, gamma)
    assert prox_objective(out, alpha, gamma) == pytest.approx(val, abs=1e-12)
    np.testing.assert_allclose(out, want, atol=1e-15)
    assert tuple(kept) == J


def test_prox_matches_oracle_random(rng):
    for _ in range(300):
        K = int(rng.integers(1, 7))
        alpha = rng.dirichlet(np.full(K, 0.7))
        gamma = float(10 ** rng.uniform(-4, 0))
        out, _ = prox_l0_simplex(alpha, gamma)
        val, _, _ = prox_oracle(alpha, gamma)
        assert prox_objective(out, alpha, gamma) <= val + 1e-12


def test_minus_m_inside_the_factor_gives_a_different_operator():
    # reading ((...) - m) / (2 gamma) instead of (...) / (2 gamma) - m picks other supports
    alpha = np.array([0.05, 0.15, 0.8])
    disagree = 0
    for gamma in np.geomspace(1e-4, 10.0, 60):
        s = np.sort(alpha)
        m = np.arange(3)
        cum = np.concatenate(([0.0], np.cumsum(s)))[m]
        cumsq = np.concatenate(([0.0], np.cumsum(s * s)))[m]
        k_inside = int(np.argmin((cum**2 / (3 - m) + cumsq - m) / (2 * gamma)))
        disagree += k_inside != 3 - len(prox_oracle(alpha, gamma)[2])
    assert disagree > 0


def test_prox_trivial_cases():
    out, kept = prox_l0_simplex([1.0], 5.0)
    assert out.tolist() == [1.0] and kept.tolist() == [0]
    alpha = np.array([0.2, 0.3, 0.5])
    out, kept = prox_l0_simplex(alpha, 1e-9)
    np.testing.assert_array_equal(out, alpha)
    assert kept.tolist() == [0, 1, 2]
    with pytest.raises(ValueError):
        prox_l0_simplex(alpha, 0.0)


simplex = st.integers(1, 12).flatmap(
    lambda K: st.lists(st.floats(0.0, 1.0), min_size=K, max_size=K).filter(lambda v: sum(v) > 1e-6)
).map(lambda v: np.array(v) / np.sum(v))


@settings(max_examples=1000)
@given(alpha=simplex, gamma=st.floats(1e-6, 10.0), seed=st.integers(0, 2**32 - 1))
def test_prox_closure_and_equivariance(alpha, gamma, seed):
    out, kept = prox_l0_simplex(alpha, gamma)
    assert abs(out.sum() - 1.0) <= 1e-12
    assert np.all(out >= 0)
    assert set(np.flatnonzero(out)) <= set(kept.tolist())
    if kept.size < alpha.size:
        assert alpha[kept].min() >= np.delete(alpha, kept).max()
    perm = np.random.default_rng(seed).permutation(alpha.size)
    out_p, kept_p = prox_l0_simplex(alpha[perm], gamma)
    np.testing.assert_array_equal(out_p, out[perm])
    assert sorted(perm[kept_p].tolist()) == kept.tolist()


def test_prox_ties_kept_together():
    out, kept = prox_l0_simplex([0.25, 0.25, 0.25, 0.25], 0.01)
    assert kept.tolist() == [0, 1, 2, 3]
    np.testing.assert_array_equal(out, [0.25] * 4)


# -- M-steps ------------------------------------------------------------------------------------

def test_m_step_b0_equals_weighted_mle(rng):
    for m in (1, 2, 3):
        X = 0.5 + rng.uniform(-0.2, 0.2, (400, m))
        w = rng.random(400)
        mean, cov = m_step_wrapped(X, w, np.full(m, 0.5), 0.01 * np.eye(m), WRAPPED_FULL, B=0)
        mu = w @ X / w.sum()
        S = (w[:, None] * (X - mu)).T @ (X - mu) / w.sum()
        np.testing.assert_allclose(mean, mu, atol=1e-10)
        np.testing.assert_allclose(cov, S, atol=1e-10)
        mean_d, var_d = m_step_wrapped(X, w, np.full(m, 0.5), np.full(m, 0.01), WRAPPED_DIAG, B=0)
        np.testing.assert_allclose(mean_d, mu, atol=1e-10)
        np.testing.assert_allclose(var_d, np.diag(S), atol=1e-10)


def test_m_step_point_mass():
    X = np.array([[0.3, 0.6], [0.9, 0.1], [0.5, 0.5]])
    mean, cov = m_step_wrapped(X, [0.0, 2.0, 0.0], [0.9, 0.1], 0.01 * np.eye(2), WRAPPED_FULL, B=1, cov_floor=1e-8)
    np.testing.assert_allclose(mean, [0.9, 0.1], atol=1e-12)
    np.testing.assert_allclose(np.linalg.eigvalsh(cov), 1e-8, rtol=1e-6)


def test_m_step_degenerate_mass():
    assert m_step_wrapped([[0.1]], [0.0], [0.1], [[0.01]]) is None
    assert m_step_von_mises([[0.1]], [0.0]) is None


def test_m_step_full_and_diag_agree_for_one_coordinate(rng):
    X = rng.random((300, 1))
    w = rng.random(300)
    a = m_step_wrapped(X, w, [0.4], [[0.05]], WRAPPED_FULL, B=2)
    b = m_step_wrapped(X, w, [0.4], [0.05], WRAPPED_DIAG, B=2)
    np.testing.assert_allclose(a[0], b[0], atol=1e-12)
    np.testing.assert_allclose(a[1][0, 0], b[1][0], rtol=1e-10)


def _wrapped_sample(rng, n, mean, sd):
    return wrap(mean + sd * rng.standard_normal((n, len(np.atleast_1d(mean)))))


def test_sigma_recovery_across_the_seam(rng):
    X = _wrapped_sample(rng, 10_000, np.array([0.98]), 0.03)
    init = SparseMixtureModel(1, (MixtureComponent((0,), 1.0, WRAPPED_DIAG, [0.9], [0.01]),), 1)
    model = em_fit(WeightedSampleSet(X, np.ones(len(X))), init)
    c = model.components[0]
    assert c.cov[0] == pytest.approx(0.03**2, rel=0.1)
    assert abs(((c.mean[0] - 0.98 + 0.5) % 1) - 0.5) < 0.005


def test_single_component_mean_is_circular_mean(rng):
    X = _wrapped_sample(rng, 5000, np.array([0.02]), 0.02)
    init = SparseMixtureModel(1, (MixtureComponent((0,), 1.0, WRAPPED_DIAG, [0.5], [0.05]),), 1)
    model = em_fit(WeightedSampleSet(X, np.ones(len(X))), init)
    ang = 2 * np.pi * X[:, 0]
    circ = (np.arctan2(np.sin(ang).mean(), np.cos(ang).mean()) / (2 * np.pi)) % 1
    assert abs(((model.components[0].mean[0] - circ + 0.5) % 1) - 0.5) < 1e-3


def test_two_clusters(rng):
    X = np.concatenate([_wrapped_sample(rng, 3000, np.array([0.2]), 0.02),
                        _wrapped_sample(rng, 2000, np.array([0.7]), 0.03)])
    init = SparseMixtureModel(1, (
        MixtureComponent((0,), 0.5, WRAPPED_FULL, [0.3], [[0.01]]),
        MixtureComponent((0,), 0.5, WRAPPED_FULL, [0.6], [[0.01]]),
    ), 1)
    model = em_fit(WeightedSampleSet(X, np.ones(len(X))), init)
    means = sorted(c.mean[0] for c in model.components)
    assert abs(means[0] - 0.2) < 0.01 and abs(means[1] - 0.7) < 0.01
    assert sorted(model.alphas) == pytest.approx([0.4, 0.6], abs=0.02)


def test_stationary_point_barely_moves(rng):
    truth = SparseMixtureModel(2, (
        MixtureComponent((0, 1), 0.6, WRAPPED_FULL, [0.3, 0.4], [[0.004, 0.001], [0.001, 0.003]]),
        MixtureComponent((1,), 0.4, WRAPPED_FULL, [0.8], [[0.002]]),
    ), 1)
    n = 100_000
    z = np.zeros(n, dtype=bool)
    z[: int(0.6 * n)] = True  # exact label counts keep the weight update free of binomial noise
    X = rng.random((n, 2))
    X[z] = wrap(rng.multivariate_normal([0.3, 0.4], truth.components[0].cov, z.sum()))
    X[~z, 1] = wrap(0.8 + math.sqrt(0.002) * rng.standard_normal((~z).sum()))
    res = run_em(WeightedSampleSet(X, np.ones(n)), truth, EmConfig(max_iters=1))
    for a, b in zip(truth.components, res.model.components):
        assert abs(a.alpha - b.alpha) < 1e-3
        assert np.max(np.abs(a.mean - b.mean)) < 1e-3
        assert np.max(np.abs(a.cov - b.cov)) < 1e-3


def test_von_mises_m_step_edges():
    mean, kappa = m_step_von_mises(np.full((10, 1), 0.3), np.ones(10), 1e-3, 1e4)
    assert mean[0] == pytest.approx(0.3) and kappa[0] == 1e4
    grid = (np.arange(1000) / 1000)[:, None]
    _, kappa = m_step_von_mises(grid, np.ones(1000), 1e-3, 1e4)
    assert kappa[0] == pytest.approx(1e-3)


def test_von_mises_kappa_recovery():
    for seed in range(3):
        th = vonmises.rvs(25.0, loc=0.0, size=10_000, random_state=seed)
        X = wrap(0.35 + th / (2 * np.pi))[:, None]
        mean, kappa = m_step_von_mises(X, np.ones(len(X)))
        assert kappa[0] == pytest.approx(25.0, rel=0.15)
        assert abs(mean[0] - 0.35) < 0.01


def test_bessel_ratio_inverse():
    from spamm.em import _invert_bessel_ratio

    for k in (0.01, 0.5, 3.0, 40.0, 900.0):
        assert _invert_bessel_ratio(float(bessel_ratio(k)), 1e-3, 1e4) == pytest.approx(k, rel=1e-8)


# -- EM properties ------------------------------------------------------------------------------

def _random_problem(rng):
    d = int(rng.integers(1, 4))
    family = [WRAPPED_FULL, WRAPPED_DIAG, VON_MISES][int(rng.integers(3))]
    K = int(rng.integers(1, 4))
    n = 400
    X = rng.random((n, d))
    centers = rng.random((K, d))
    lab = rng.integers(0, K + 1, n)
    for k in range(K):
        X[lab == k] = wrap(centers[k] + 0.05 * rng.standard_normal(((lab == k).sum(), d)))
    comps = []
    for k in range(K):
        u = tuple(sorted(rng.choice(d, size=int(rng.integers(1, d + 1)), replace=False).tolist()))
        m = len(u)
        mean = rng.random(m)
        if family == VON_MISES:
            comps.append(MixtureComponent(u, 1.0, family, mean, kappa=rng.uniform(1, 10, m)))
        elif family == WRAPPED_DIAG:
            comps.append(MixtureComponent(u, 1.0, family, mean, rng.uniform(0.005, 0.05, m)))
        else:
            comps.append(MixtureComponent(u, 1.0, family, mean, random_spd(rng, m, scale=0.02)))
    if rng.random() < 0.5:
        comps.append(MixtureComponent.uniform(1.0))
    # fitted spreads can reach ~0.6 on these corpora; B = 2, 3 keeps the lattice window adequate
    init = SparseMixtureModel.normalized(d, comps, int(rng.integers(2, 4)))
    w = rng.random(n) + 0.1 if rng.random() < 0.5 else np.ones(n)
    return WeightedSampleSet(X, w), init


def test_em_monotone_on_random_fits():
    rng = np.random.default_rng(99)
    for _ in range(50):
        samples, init = _random_problem(rng)
        hist = run_em(samples, init, EmConfig(max_iters=60)).history
        for a, b in zip(hist, hist[1:]):
            assert b >= a - 1e-9 * abs(a)


def test_univariate_kernel_matches_generic(rng):
    for _ in range(10):
        samples, init = _random_problem(rng)
        if samples.d != 1:
            continue
        fast = run_em(samples, init, EmConfig(max_iters=40))
        slow = run_em(samples, init, EmConfig(max_iters=40), _vectorized=False)
        assert len(fast.history) == len(slow.history)
        np.testing.assert_allclose(fast.history, slow.history, rtol=1e-10)
    X = _wrapped_sample(rng, 2000, np.array([0.5]), 0.05)
    s = WeightedSampleSet(X, np.ones(len(X)))
    init = SparseMixtureModel(1, (
        MixtureComponent((0,), 0.3, WRAPPED_FULL, [0.4], [[0.01]]),
        MixtureComponent((0,), 0.3, VON_MISES, [0.6], kappa=[4.0]),
        MixtureComponent.uniform(0.4),
    ), 1)
    for prox in (None, ProxConfig(0.01)):
        a = run_em(s, init, EmConfig(), prox)
        b = run_em(s, init, EmConfig(), prox, _vectorized=False)
        np.testing.assert_allclose(a.history, b.history, rtol=1e-10)
        assert a.model.n_components == b.model.n_components


def test_em_returns_simplex_weights(rng):
    samples, init = _random_problem(rng)
    model = em_fit(samples, init)
    assert math.fsum(model.alphas) == pytest.approx(1.0, abs=1e-12)


def test_em_config_validation():
    with pytest.raises(ValueError):
        EmConfig(max_iters=0)
    with pytest.raises(ValueError):
        EmConfig(rel_tol=0.0)
    with pytest.raises(ValueError):
        ProxConfig(0.0)


# -- Prox-EM and fixed-group EM -----------------------------------------------------------------

def _two_cluster_data(rng, n=4000):
    X = np.concatenate([_wrapped_sample(rng, int(0.6 * n), np.array([0.25]), 0.03),
                        _wrapped_sample(rng, n - int(0.6 * n), np.array([0.75]), 0.03)])
    return WeightedSampleSet(X, np.ones(n))


def test_prox_em_tiny_gamma_tracks_em(rng):
    s = _two_cluster_data(rng)
    init = SparseMixtureModel(1, (
        MixtureComponent((0,), 0.5, WRAPPED_FULL, [0.2], [[0.01]]),
        MixtureComponent((0,), 0.5, WRAPPED_FULL, [0.8], [[0.01]]),
    ), 1)
    a = run_em(s, init)
    b = run_em(s, init, prox=ProxConfig(1e-12))
    np.testing.assert_allclose(a.history, b.history, rtol=1e-9)


def test_prox_em_removes_redundant_component(rng):
    s = _two_cluster_data(rng)
    init = SparseMixtureModel(1, (
        MixtureComponent((0,), 0.4, WRAPPED_FULL, [0.2], [[0.01]]),
        MixtureComponent((0,), 0.4, WRAPPED_FULL, [0.8], [[0.01]]),
        MixtureComponent((0,), 0.2, WRAPPED_FULL, [0.5], [[0.001]]),
    ), 1)
    res = run_em(s, init, prox=ProxConfig(1e-3))
    assert res.model.n_components == 2
    sizes = [len(h) for h in [res.history]]
    assert sizes[0] >= 2
    model = prox_em_fit(s, init, ProxConfig(1e-3))
    assert model.to_json() == res.model.to_json()


def test_prox_em_component_count_never_grows(rng):
    s = _two_cluster_data(rng, 1000)
    comps = [MixtureComponent((0,), 0.2, WRAPPED_FULL, [m], [[0.01]]) for m in (0.1, 0.3, 0.5, 0.7, 0.9)]
    init = SparseMixtureModel.normalized(1, comps, 1)
    prev = init.n_components
    model = init
    for _ in range(15):
        model = run_em(s, model, EmConfig(max_iters=1), ProxConfig(5e-3)).model
        assert model.n_components <= prev
        assert np.all(model.alphas >= 0)
        prev = model.n_components


def _fixed_problem(rng):
    n = 6000
    X = rng.random((n, 2))
    z = rng.random(n) < 0.5
    X[z, 0] = wrap(0.3 + 0.03 * rng.standard_normal(z.sum()))
    X[~z, 1] = wrap(0.7 + 0.03 * rng.standard_normal((~z).sum()))
    fixed = [MixtureComponent((0,), 0.5, WRAPPED_FULL, [0.3], [[0.0009]])]
    free = [MixtureComponent((1,), 0.5, WRAPPED_FULL, [0.65], [[0.004]])]
    return WeightedSampleSet(X, np.ones(n)), fixed, free


def test_fixed_group_em_recovers_free_component(rng):
    s, fixed, free = _fixed_problem(rng)
    model = fixed_group_em(s, fixed, free, None, EmConfig(), 2, 1)
    got = model.components[1]
    assert abs(got.mean[0] - 0.7) < 0.01
    assert model.components[0] is fixed[0]
    assert model.components[0].alpha == fixed[0].alpha
    np.testing.assert_array_equal(model.components[0].mean, fixed[0].mean)
    np.testing.assert_array_equal(model.components[0].cov, fixed[0].cov)


def test_fixed_group_em_free_mass(rng):
    s, fixed, free = _fixed_problem(rng)
    fixed = [fixed[0].with_alpha(0.3)]
    free = [free[0].with_alpha(0.4), MixtureComponent.uniform(0.3)]
    model = fixed_group_em(s, fixed, free, ProxConfig(1e-3), EmConfig(), 2, 1)
    free_mass = math.fsum(c.alpha for c in model.components[1:])
    assert abs(free_mass - 0.7) <= 1e-12
    assert math.fsum(model.alphas) == pytest.approx(1.0, abs=1e-12)


def test_fixed_group_em_trivial_cases(rng):
    s, fixed, free = _fixed_problem(rng)
    init = SparseMixtureModel(2, (fixed[0], free[0]), 1)
    a = fixed_group_em(s, [], [fixed[0], free[0]], ProxConfig(1e-3), EmConfig(), 2, 1)
    b = prox_em_fit(s, init, ProxConfig(1e-3))
    assert a.to_json() == b.to_json()
    full = [fixed[0].with_alpha(1.0)]
    assert fixed_group_em(s, full, [], None, EmConfig(), 2, 1).components[0] is full[0]
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        out = fixed_group_em(s, full, [free[0].with_alpha(0.0)], None, EmConfig(), 2, 1)
    assert out.n_components == 1 and caught


# -- BIC ----------------------------------------------------------------------------------------

def test_bic_single_cluster():
    hits = 0
    for seed in range(20):
        rng = np.random.default_rng(seed)
        x = wrap(0.4 + 0.05 * rng.standard_normal(2000))
        res = bic_select(UnivariateWeightedSamples(x, np.ones(2000)), 3, seed=seed)
        hits += res.k_opt == 1
    assert hits >= 19


def test_bic_two_clusters(rng):
    x = np.concatenate([wrap(0.2 + 0.03 * rng.standard_normal(1000)), wrap(0.7 + 0.03 * rng.standard_normal(1000))])
    res = bic_select(UnivariateWeightedSamples(x, np.ones(2000)), 3, seed=1)
    assert res.k_opt == 2
    means = sorted(c.mean[0] for c in res.model.components if not c.is_uniform)
    assert abs(means[0] - 0.2) < 0.01 and abs(means[1] - 0.7) < 0.01


def test_bic_kmax_one(rng):
    x = rng.random(500)
    res = bic_select(UnivariateWeightedSamples(x, np.ones(500)), 1, seed=0)
    assert res.k_opt == 1 and set(res.bic) == {1}
    with pytest.raises(ValueError):
        bic_select(UnivariateWeightedSamples(x, np.ones(500)), 0)


def test_bic_is_deterministic(rng):
    x = wrap(0.4 + 0.05 * rng.standard_normal(1000))
    a = bic_select(UnivariateWeightedSamples(x, np.ones(1000)), 3, seed=5)
    b = bic_select(UnivariateWeightedSamples(x, np.ones(1000)), 3, seed=5)
    assert a.model.to_json() == b.model.to_json()


@pytest.mark.parametrize("family", [WRAPPED_DIAG, VON_MISES])
def test_bic_other_families(rng, family):
    x = np.concatenate([wrap(0.2 + 0.03 * rng.standard_normal(1000)), wrap(0.7 + 0.03 * rng.standard_normal(1000))])
    res = bic_select(UnivariateWeightedSamples(x, np.ones(2000)), 3, family=family, seed=2)
    assert res.k_opt == 2
    assert all(c.family == family for c in res.model.components if not c.is_uniform)
