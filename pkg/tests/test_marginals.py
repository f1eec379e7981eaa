import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import multivariate_normal, qmc

from helpers import random_spd
from spamm.densities import component_pdf, mixture_pdf, wrapped_normal_pdf
from spamm.errors import NumericError
from spamm.marginals import (
    block_inverse,
    conditional_params,
    gaussian_logpdf,
    marginal_component,
    marginalize_model,
    split_gaussian_logpdf,
)
from spamm.model import UNIFORM, VON_MISES, WRAPPED_DIAG, WRAPPED_FULL, MixtureComponent, SparseMixtureModel
from spamm.synth import f1_model


@st.composite
def spd_and_split(draw):
    n = draw(st.integers(2, 8))
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    cov = random_spd(rng, n, scale=float(rng.uniform(0.01, 10.0)), jitter=0.1)
    size = draw(st.integers(1, n - 1))
    u = sorted(rng.choice(n, size=size, replace=False).tolist())
    return cov, u


@settings(max_examples=1000)
@given(spd_and_split())
def test_block_inverse_identity_and_determinant(case):
    cov, u = case
    bi = block_inverse(cov, u)
    inv = bi.assemble()
    assert np.max(np.abs(cov @ inv - np.eye(cov.shape[0]))) < 1e-10
    det = np.linalg.det(cov)
    assert abs(bi.det - det) <= 1e-10 * abs(det)


def test_block_inverse_against_dense_inverse(rng):
    cov = random_spd(rng, 5)
    bi = block_inverse(cov, [0, 2])
    dense = np.linalg.inv(cov)
    np.testing.assert_allclose(bi.A, dense[np.ix_([0, 2], [0, 2])], atol=1e-10)
    np.testing.assert_allclose(bi.B, dense[np.ix_([0, 2], [1, 3, 4])], atol=1e-10)
    np.testing.assert_allclose(bi.C, dense[np.ix_([1, 3, 4], [0, 2])], atol=1e-10)
    np.testing.assert_allclose(bi.D, dense[np.ix_([1, 3, 4], [1, 3, 4])], atol=1e-10)
    assert np.max(np.abs(bi.assemble() @ cov - np.eye(5))) < 1e-10


def test_block_inverse_identity_matrix():
    bi = block_inverse(np.eye(4), [1, 3])
    np.testing.assert_array_equal(bi.A, np.eye(2))
    np.testing.assert_array_equal(bi.D, np.eye(2))
    assert not bi.B.any() and not bi.C.any()


def test_block_inverse_scalar_schur():
    a, b, c = 2.0, 0.7, 1.5
    bi = block_inverse([[a, b], [b, c]], [0])
    assert bi.D[0, 0] == pytest.approx(1.0 / (c - b * b / a), rel=1e-14)


def test_block_inverse_errors():
    cov = np.eye(3)
    cov[0, 0] = 0.0
    with pytest.raises(NumericError):
        block_inverse(cov, [0])
    with pytest.raises(ValueError):
        block_inverse(np.eye(3), [0, 1, 2])
    with pytest.raises(ValueError):
        block_inverse(np.eye(3), [])


def test_marginal_component_restriction():
    comp = f1_model().components[0]
    assert marginal_component(comp, range(15)) is comp
    m = marginal_component(comp, [0, 1])
    assert m.u == (0, 1) and m.alpha == comp.alpha
    np.testing.assert_array_equal(m.mean, [0.5, 0.5])
    np.testing.assert_array_equal(m.cov, 1e-3 * np.eye(2))
    u = marginal_component(comp, [5, 14])
    assert u.family == UNIFORM and u.alpha == comp.alpha


def test_marginal_component_other_families():
    diag = MixtureComponent((1, 3, 4), 0.4, WRAPPED_DIAG, [0.1, 0.2, 0.3], [1e-2, 2e-2, 3e-2])
    m = marginal_component(diag, [3])
    assert m.u == (3,) and m.family == WRAPPED_DIAG
    np.testing.assert_array_equal(m.cov, [2e-2])
    vm = MixtureComponent((0, 2), 0.4, VON_MISES, [0.1, 0.2], kappa=[3.0, 4.0])
    m = marginal_component(vm, [0])
    np.testing.assert_array_equal(m.kappa, [3.0])


def _trapezoid_marginal(f, x_keep, keep, d, n_grid):
    """Integrate f over the coordinates not in ``keep`` with the periodic trapezoid rule."""
    drop = [i for i in range(d) if i not in keep]
    grid = np.arange(n_grid) / n_grid
    pts = np.array(list(itertools.product(grid, repeat=len(drop))))
    X = np.empty((pts.shape[0], d))
    X[:, keep] = x_keep
    X[:, drop] = pts
    return f(X).mean()


def test_marginal_component_matches_quadrature(rng):
    cov = np.array([[0.02, 0.008], [0.008, 0.015]])
    comp = MixtureComponent((0, 1), 1.0, WRAPPED_FULL, [0.8, 0.3], cov)
    marg = marginal_component(comp, [0])
    for x in rng.random(10):
        want = _trapezoid_marginal(lambda X: component_pdf(comp, X, 3), [x], [0], 2, 400)
        got = component_pdf(marg, np.array([[x]]), 3)[0]
        assert abs(got - want) < 1e-6


def _small_model(rng, d):
    comps = [
        MixtureComponent((0, 1), 0.4, WRAPPED_FULL, rng.random(2), random_spd(rng, 2, scale=0.02)),
        MixtureComponent(tuple(range(1, d)), 0.3, WRAPPED_FULL, rng.random(d - 1), random_spd(rng, d - 1, scale=0.03)),
        MixtureComponent((d - 1,), 0.2, VON_MISES, rng.random(1), kappa=[5.0]),
        MixtureComponent.uniform(0.1),
    ]
    return SparseMixtureModel(d, tuple(comps), 3)


@pytest.mark.parametrize("d,keep", [(2, [0]), (3, [0, 2]), (3, [1]), (4, [1, 3])])
def test_marginal_theorem_quadrature(rng, d, keep):
    model = _small_model(rng, d)
    marg = marginalize_model(model, keep)
    n_grid = 120 if d - len(keep) == 1 else 60
    for _ in range(4):
        x = rng.random(len(keep))
        want = _trapezoid_marginal(lambda X: mixture_pdf(model, X), x, keep, d, n_grid)
        assert abs(mixture_pdf(marg, x) - want) < 1e-6


@pytest.mark.parametrize("d,keep", [(3, [0]), (4, [2]), (4, [0, 3])])
def test_marginal_theorem_monte_carlo(rng, d, keep):
    # scrambled Sobol points: an unbiased Monte-Carlo estimate with a small enough spread for 1e-4
    model = _small_model(rng, d)
    marg = marginalize_model(model, keep)
    drop = [i for i in range(d) if i not in keep]
    pts = qmc.Sobol(len(drop), scramble=True, seed=7).random(2**16)
    for _ in range(3):
        x = rng.random(len(keep))
        X = np.empty((pts.shape[0], d))
        X[:, keep] = x
        X[:, drop] = pts
        assert abs(mixture_pdf(marg, x) - mixture_pdf(model, X).mean()) < 1e-4


def test_marginalize_f1_on_14():
    marg = marginalize_model(f1_model(), [14])
    assert marg.d == 1 and marg.n_components == 2
    byfam = {c.family: c for c in marg.components}
    assert byfam[UNIFORM].alpha == pytest.approx(0.7)
    w = byfam[WRAPPED_FULL]
    assert w.alpha == pytest.approx(0.3) and w.u == (0,)
    np.testing.assert_array_equal(w.mean, [0.25])
    np.testing.assert_array_equal(w.cov, [[1e-3]])


def test_marginalize_merges_and_keeps_weights():
    a = MixtureComponent((0, 1), 0.5, WRAPPED_FULL, [0.2, 0.3], np.diag([0.01, 0.02]))
    b = MixtureComponent((0, 2), 0.5, WRAPPED_FULL, [0.2, 0.9], np.diag([0.01, 0.05]))
    model = SparseMixtureModel(3, (a, b))
    marg = marginalize_model(model, [0])
    assert marg.n_components == 1 and marg.components[0].alpha == pytest.approx(1.0)
    full = marginalize_model(model, [0, 1, 2])
    assert full.n_components == 2
    assert sum(c.alpha for c in full.components) == pytest.approx(1.0, abs=1e-12)


def test_conditional_params_trivial_cases():
    cov = np.diag([0.01, 0.02, 0.03])
    comp = MixtureComponent((0, 1, 2), 1.0, WRAPPED_FULL, [0.1, 0.5, 0.9], cov)
    cp = conditional_params(comp, [1], [0.77])
    np.testing.assert_allclose(cp.mean_bar, [0.1, 0.9])
    np.testing.assert_allclose(cp.cov_bar, np.diag([0.01, 0.03]))
    comp2 = MixtureComponent((0, 1), 1.0, WRAPPED_FULL, [0.3, 0.6], [[0.02, 0.01], [0.01, 0.03]])
    assert conditional_params(comp2, [0], [0.3], [0]).mean_bar == pytest.approx([0.6])


def test_conditional_params_precision_oracle(rng):
    for _ in range(20):
        cov = random_spd(rng, 4, scale=0.05)
        mean = rng.random(4)
        comp = MixtureComponent((0, 1, 2, 3), 1.0, WRAPPED_FULL, mean, cov)
        u = [0, 2]
        rest = [1, 3]
        x_u = rng.random(2)
        l_u = rng.integers(-1, 2, 2)
        cp = conditional_params(comp, u, x_u, l_u)
        P = np.linalg.inv(cov)
        P_rr = P[np.ix_(rest, rest)]
        want_cov = np.linalg.inv(P_rr)
        want_mean = mean[rest] - want_cov @ P[np.ix_(rest, u)] @ (x_u + l_u - mean[u])
        np.testing.assert_allclose(cp.cov_bar, want_cov, atol=1e-12)
        np.testing.assert_allclose(cp.mean_bar, want_mean, atol=1e-10)


def test_conditional_density_ratio(rng):
    for _ in range(20):
        cov = random_spd(rng, 3, scale=0.05)
        mean = rng.random(3)
        y = mean + rng.normal(scale=0.2, size=3)
        comp = MixtureComponent((0, 1, 2), 1.0, WRAPPED_FULL, mean, cov)
        cp = conditional_params(comp, [1], y[[1]])
        joint = multivariate_normal(mean, cov).logpdf(y)
        marg = multivariate_normal(mean[[1]], cov[np.ix_([1], [1])]).logpdf(y[[1]])
        assert gaussian_logpdf(y[[0, 2]], cp.mean_bar, cp.cov_bar) == pytest.approx(joint - marg, abs=1e-8)


def test_split_logpdf_matches_scipy(rng):
    for _ in range(20):
        cov = random_spd(rng, 5, scale=0.3)
        mean = rng.normal(size=5)
        y = rng.normal(size=5)
        marg, cond = split_gaussian_logpdf(y, mean, cov, [0, 3])
        assert marg + cond == pytest.approx(multivariate_normal(mean, cov).logpdf(y), abs=1e-10)


def test_conditional_params_rejects_bad_sets():
    comp = MixtureComponent((0, 1), 1.0, WRAPPED_FULL, [0.3, 0.6], np.eye(2) * 0.01)
    with pytest.raises(ValueError):
        conditional_params(comp, [0, 1], [0.1, 0.2])
    vm = MixtureComponent((0, 1), 1.0, VON_MISES, [0.3, 0.6], kappa=[1.0, 1.0])
    with pytest.raises(ValueError):
        conditional_params(vm, [0], [0.1])


def test_wrapped_marginal_of_truncated_sum_is_consistent(rng):
    # lattice sums over all shifts commute with marginalization for a wide enough window
    cov = random_spd(rng, 2, scale=0.02)
    mean = rng.random(2)
    x = rng.random()
    grid = np.arange(300) / 300
    X = np.column_stack([np.full(300, x), grid])
    want = wrapped_normal_pdf(X, mean, cov, 3).mean()
    assert wrapped_normal_pdf([x], mean[:1], cov[:1, :1], 3) == pytest.approx(want, abs=1e-9)
