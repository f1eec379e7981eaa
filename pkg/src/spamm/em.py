"""EM, proximal EM with l0 simplex sparsification, fixed-group EM and BIC selection.

The wrapped M-step treats the lattice shift of every sample as an extra
latent variable: the E-step distributes each sample over its (2B+1)^m
nearest images and the M-step is the weighted Gaussian MLE on the
unwrapped points.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq
from scipy.special import i0e, i1e

from .densities import (
    LOG_2PI,
    _wrapped_diag_terms,
    centered_residual,
    component_logpdf,
    log_density_matrix,
    log_i0,
    logsumexp,
    shifted_gaussian_logpdf,
)
from .errors import NumericError, ZeroDensityError
from .model import UNIFORM, VON_MISES, WRAPPED_DIAG, WRAPPED_FULL, MixtureComponent, SparseMixtureModel
from .samples import UnivariateWeightedSamples, WeightedSampleSet, wrap

log = logging.getLogger(__name__)

DEGENERATE_MASS = 1e-12


@dataclass(frozen=True)
class EmConfig:
    max_iters: int = 200
    rel_tol: float = 1e-7
    min_weight: float = 0.0
    seed: int = 0
    cov_floor: float = 1e-8
    kappa_min: float = 1e-3
    kappa_max: float = 1e4

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if not self.rel_tol > 0:
            raise ValueError("rel_tol must be positive")


@dataclass(frozen=True)
class ProxConfig:
    gamma: float

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")


@dataclass
class EmResult:
    model: SparseMixtureModel
    loglik: float
    history: list[float] = field(default_factory=list)
    n_iter: int = 0
    converged: bool = False


def _floor_cov(cov: np.ndarray, floor: float) -> np.ndarray:
    cov = 0.5 * (cov + cov.T)
    vals, vecs = np.linalg.eigh(cov)
    if vals.min() >= floor:
        return cov
    vals = np.maximum(vals, floor)
    out = (vecs * vals) @ vecs.T
    return 0.5 * (out + out.T)


def m_step_wrapped(points, weights, mean, cov, family: str = WRAPPED_FULL, B: int = 1, cov_floor: float = 1e-8,
                   shift_terms=None):
    """Weighted M-step for one wrapped Gaussian component.

    ``points`` holds the component's coordinates (N x m), ``weights`` the
    products w_n * beta_{n,k}; ``mean``/``cov`` are the current parameters
    that define the shift posterior (``cov`` is a variance vector for the
    diagonal family).  Returns ``(mean, cov)`` or ``None`` when the
    responsibility mass is degenerate.  ``shift_terms`` may pass in the
    per-shift log densities already computed for the E-step.
    """
    X = np.atleast_2d(np.asarray(points, dtype=float))
    w = np.asarray(weights, dtype=float)
    mass = float(w.sum())
    if mass < DEGENERATE_MASS:
        return None
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    if family == WRAPPED_FULL:
        if shift_terms is None:
            logp, shifts = shifted_gaussian_logpdf(X, mean, cov, B)
        else:
            logp, shifts = shift_terms
        omega = w[:, None] * np.exp(logp - logsumexp(logp, axis=1, keepdims=True))
        # unwrapped points are r_n + l_s; accumulate moments without forming them
        r = centered_residual(X, mean)
        lbar = omega @ shifts
        offset = (w @ r + lbar.sum(axis=0)) / mass
        dev = r - offset
        cross = dev.T @ lbar
        new_cov = ((w[:, None] * dev).T @ dev + cross + cross.T + (shifts.T * omega.sum(axis=0)) @ shifts) / mass
        return wrap(mean + offset), _floor_cov(new_cov, cov_floor)
    if family == WRAPPED_DIAG:
        var = np.atleast_1d(np.asarray(cov, dtype=float))
        terms = _wrapped_diag_terms(X, mean, var, B) if shift_terms is None else shift_terms
        gamma = np.exp(terms - logsumexp(terms, axis=2, keepdims=True))
        omega = w[:, None, None] * gamma
        shifts = np.arange(-B, B + 1, dtype=float)
        y = centered_residual(X, mean)[:, :, None] + shifts[None, None, :]
        offset = (omega * y).sum(axis=(0, 2)) / mass
        dev = y - offset[None, :, None]
        new_var = (omega * dev * dev).sum(axis=(0, 2)) / mass
        return wrap(mean + offset), np.maximum(new_var, cov_floor)
    raise ValueError(f"m_step_wrapped does not handle {family!r}")


def bessel_ratio(kappa):
    """A(kappa) = I1(kappa) / I0(kappa)."""
    return i1e(kappa) / i0e(kappa)


def _invert_bessel_ratio(r: float, lo: float, hi: float) -> float:
    if r >= bessel_ratio(hi):
        return hi
    if r <= bessel_ratio(lo):
        return lo
    return brentq(lambda k: bessel_ratio(k) - r, lo, hi, xtol=1e-12, rtol=1e-12)


def m_step_von_mises(points, weights, kappa_min: float = 1e-3, kappa_max: float = 1e4):
    """Weighted von Mises MLE: mean from the resultant, kappa from A(kappa) = R."""
    X = np.atleast_2d(np.asarray(points, dtype=float))
    w = np.asarray(weights, dtype=float)
    mass = float(w.sum())
    if mass < DEGENERATE_MASS:
        return None
    ang = 2.0 * np.pi * X
    C = w @ np.cos(ang)
    S = w @ np.sin(ang)
    R = np.hypot(C, S) / mass
    mean = wrap(np.arctan2(S, C) / (2.0 * np.pi))
    kappa = np.array([_invert_bessel_ratio(float(min(r, 1.0)), kappa_min, kappa_max) for r in R])
    return mean, kappa


def _terms(comp: MixtureComponent, X: np.ndarray, B: int):
    """Component log density on ``X`` plus the per-shift terms the M-step reuses."""
    if comp.family == WRAPPED_FULL:
        logp, shifts = shifted_gaussian_logpdf(X[:, list(comp.u)], comp.mean, comp.cov, B)
        return logsumexp(logp, axis=1), (logp, shifts)
    if comp.family == WRAPPED_DIAG:
        terms = _wrapped_diag_terms(X[:, list(comp.u)], comp.mean, comp.cov, B)
        return logsumexp(terms, axis=2).sum(axis=1), terms
    return component_logpdf(comp, X, B), None


def m_step_component(comp: MixtureComponent, X: np.ndarray, weights: np.ndarray, B: int, cfg: EmConfig,
                     shift_terms=None):
    """New parameters for ``comp`` (alpha untouched) or ``None`` if degenerate."""
    if comp.is_uniform:
        return comp
    xu = X[:, list(comp.u)]
    if comp.family == VON_MISES:
        res = m_step_von_mises(xu, weights, cfg.kappa_min, cfg.kappa_max)
        if res is None:
            return None
        return MixtureComponent(comp.u, comp.alpha, VON_MISES, res[0], kappa=res[1])
    res = m_step_wrapped(xu, weights, comp.mean, comp.cov, comp.family, B, cfg.cov_floor, shift_terms)
    if res is None:
        return None
    return MixtureComponent(comp.u, comp.alpha, comp.family, res[0], res[1])


def prox_l0_simplex(alpha, gamma: float):
    """Proximal map of gamma * ||a||_0 + indicator(simplex) at ``alpha``.

    Drops the K0 smallest weights, K0 minimizing
    ((sum of dropped)^2 / (K - m) + sum of dropped^2) / (2 gamma) - m over
    m = 0..K-1, and spreads the dropped mass evenly over the survivors.
    Tied weights are kept or dropped together.  Returns ``(alpha', kept)``
    with ``kept`` the surviving indices in increasing order.
    """
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    a = np.asarray(alpha, dtype=float)
    K = a.size
    order = np.argsort(a, kind="stable")
    s = a[order]
    cum = np.concatenate(([0.0], np.cumsum(s)))
    cumsq = np.concatenate(([0.0], np.cumsum(s * s)))
    m = np.arange(K)
    obj = (cum[m] ** 2 / (K - m) + cumsq[m]) / (2.0 * gamma) - m
    # a cut between equal weights is not allowed
    allowed = np.ones(K, dtype=bool)
    allowed[1:] = s[1:] > s[:-1]
    obj[~allowed] = np.inf
    k0 = int(np.argmin(obj))
    kept = np.sort(order[k0:])
    out = np.zeros(K)
    dropped = a[order[:k0]]
    out[kept] = a[kept] + math.fsum(dropped) / kept.size
    return out, kept


def _loglik(logj: np.ndarray, w: np.ndarray) -> tuple[np.ndarray, float]:
    lse = logsumexp(logj, axis=1)
    mask = w > 0
    bad = np.flatnonzero(mask & ~np.isfinite(lse))
    if bad.size:
        raise ZeroDensityError(int(bad[0]))
    return lse, float(np.dot(w[mask], lse[mask]))


def run_em(samples: WeightedSampleSet, init: SparseMixtureModel, cfg: EmConfig = EmConfig(),
           prox: ProxConfig | None = None, _vectorized: bool = True) -> EmResult:
    """EM (or Prox-EM when ``prox`` is given) from the initial model ``init``.

    Stops when the relative log-likelihood improvement falls below
    ``cfg.rel_tol`` (checked only between iterations that kept the same
    components) or after ``cfg.max_iters`` M-steps.
    """
    X, w = samples.points, samples.weights
    if X.shape[1] != init.d:
        raise ValueError(f"samples have dimension {X.shape[1]}, model has {init.d}")
    if init.d == 1 and _vectorized:
        return _run_em_univariate(samples, init, cfg, prox)
    W = float(w.sum())
    B = init.truncation_B
    comps = list(init.components)
    history: list[float] = []
    structure_changed = True
    converged = False
    it = 0
    for it in range(cfg.max_iters):
        logj = np.empty((X.shape[0], len(comps)))
        aux = []
        for k, c in enumerate(comps):
            lp, t = _terms(c, X, B)
            logj[:, k] = math.log(c.alpha) + lp
            aux.append(t)
        lse, ll = _loglik(logj, w)
        if history and not structure_changed:
            prev = history[-1]
            if ll - prev <= cfg.rel_tol * abs(prev):
                history.append(ll)
                converged = True
                break
        history.append(ll)
        beta = np.exp(logj - lse[:, None])
        mass = w @ beta
        new = []
        for k, c in enumerate(comps):
            if mass[k] < DEGENERATE_MASS or mass[k] / W < cfg.min_weight:
                continue
            updated = m_step_component(c, X, w * beta[:, k], B, cfg, aux[k])
            if updated is not None:
                new.append((updated, mass[k] / W))
        if not new:
            raise NumericError("every component degenerated during EM")
        alphas = np.array([a for _, a in new])
        alphas = alphas / alphas.sum()
        kept = np.arange(len(new))
        if prox is not None:
            alphas, kept = prox_l0_simplex(alphas, prox.gamma)
        structure_changed = len(kept) != len(comps)
        comps = [new[i][0].with_alpha(alphas[i]) for i in kept]
        comps = _renormalized(comps)
    else:
        logj = log_density_matrix(comps, X, B)
        _, ll = _loglik(logj, w)
        history.append(ll)
    model = SparseMixtureModel(init.d, tuple(comps), B, weight_tol=1e-9)
    return EmResult(model, history[-1], history, it + 1, converged)


def _run_em_univariate(samples: WeightedSampleSet, init: SparseMixtureModel, cfg: EmConfig,
                       prox: ProxConfig | None) -> EmResult:
    # Same iteration as run_em, with all components of a 1-D model updated in one array pass.
    x, w = samples.points[:, 0], samples.weights
    W = float(w.sum())
    B = init.truncation_B
    shifts = np.arange(-B, B + 1, dtype=float)
    comps = list(init.components)
    fam = np.array([c.family for c in comps])
    gauss = np.isin(fam, (WRAPPED_FULL, WRAPPED_DIAG))
    vm = fam == VON_MISES
    mu = np.array([0.0 if c.is_uniform else float(c.mean[0]) for c in comps])
    par = np.array([float(np.ravel(c.cov)[0]) if g else (float(c.kappa[0]) if v else 1.0)
                    for c, g, v in zip(comps, gauss, vm)])
    alpha = np.array([c.alpha for c in comps])
    history: list[float] = []
    structure_changed = True
    converged = False
    it = 0

    # arrays are (shift, component, sample) so that reductions run over a
    # leading axis or the contiguous sample axis
    def e_terms():
        logp = np.zeros((fam.size, x.size))
        y = logt = None
        if gauss.any():
            g = np.flatnonzero(gauss)
            y = (wrap(x - mu[g][:, None] + 0.5) - 0.5)[None, :, :] + shifts[:, None, None]
            logt = -0.5 * y * y / par[g][:, None] - 0.5 * (LOG_2PI + np.log(par[g]))[:, None]
            logp[g] = logsumexp(logt, axis=0)
        if vm.any():
            v = np.flatnonzero(vm)
            logp[v] = par[v][:, None] * np.cos(2.0 * np.pi * (x - mu[v][:, None])) - log_i0(par[v])[:, None]
        return logp, y, logt

    def loglik(logj):
        lse = logsumexp(logj, axis=0)
        bad = np.flatnonzero(positive & ~np.isfinite(lse))
        if bad.size:
            raise ZeroDensityError(int(bad[0]))
        return lse, float(np.dot(w[positive], lse[positive]))

    positive = w > 0
    for it in range(cfg.max_iters):
        logp, y, logt = e_terms()
        with np.errstate(divide="ignore"):
            logj = np.log(alpha)[:, None] + logp
        lse, ll = loglik(logj)
        if history and not structure_changed:
            prev = history[-1]
            if ll - prev <= cfg.rel_tol * abs(prev):
                history.append(ll)
                converged = True
                break
        history.append(ll)
        wb = w * np.exp(logj - lse)
        mass = wb.sum(axis=1)
        keep = (mass >= DEGENERATE_MASS) & ~(mass / W < cfg.min_weight)
        if gauss.any():
            g = np.flatnonzero(gauss)
            omega = wb[g] * np.exp(logt - logp[g])
            mg = np.where(mass[g] > 0, mass[g], 1.0)
            offset = (omega * y).sum(axis=0).sum(axis=1) / mg
            dev = y - offset[:, None]
            var = (omega * dev * dev).sum(axis=0).sum(axis=1) / mg
            mu[g] = wrap(mu[g] + offset)
            par[g] = np.maximum(var, cfg.cov_floor)
        if vm.any():
            v = np.flatnonzero(vm)
            ang = 2.0 * np.pi * x
            C = wb[v] @ np.cos(ang)
            S = wb[v] @ np.sin(ang)
            mv = np.where(mass[v] > 0, mass[v], 1.0)
            mu[v] = wrap(np.arctan2(S, C) / (2.0 * np.pi))
            R = np.minimum(np.hypot(C, S) / mv, 1.0)
            par[v] = [_invert_bessel_ratio(float(r), cfg.kappa_min, cfg.kappa_max) for r in R]
        idx = np.flatnonzero(keep)
        if not idx.size:
            raise NumericError("every component degenerated during EM")
        a = mass[idx] / W
        a = a / a.sum()
        kept = np.arange(idx.size)
        if prox is not None:
            a, kept = prox_l0_simplex(a, prox.gamma)
        structure_changed = kept.size != fam.size
        idx = idx[kept]
        a = a[kept]
        fam, gauss, vm, mu, par = fam[idx], gauss[idx], vm[idx], mu[idx], par[idx]
        alpha = a / math.fsum(a)
    else:
        logp, _, _ = e_terms()
        with np.errstate(divide="ignore"):
            _, ll = loglik(np.log(alpha)[:, None] + logp)
        history.append(ll)
    out = []
    for f, m, q, a in zip(fam, mu, par, alpha):
        if f == UNIFORM:
            out.append(MixtureComponent.uniform(a))
        elif f == VON_MISES:
            out.append(MixtureComponent((0,), a, VON_MISES, [m], kappa=[q]))
        elif f == WRAPPED_DIAG:
            out.append(MixtureComponent((0,), a, WRAPPED_DIAG, [m], [q]))
        else:
            out.append(MixtureComponent((0,), a, WRAPPED_FULL, [m], [[q]]))
    model = SparseMixtureModel(1, tuple(out), B, weight_tol=1e-9)
    return EmResult(model, history[-1], history, it + 1, converged)


def _renormalized(comps: list[MixtureComponent]) -> list[MixtureComponent]:
    total = math.fsum(c.alpha for c in comps)
    if total == 1.0:
        return comps
    return [c.with_alpha(c.alpha / total) for c in comps]


def em_fit(samples: WeightedSampleSet, init: SparseMixtureModel, cfg: EmConfig = EmConfig()) -> SparseMixtureModel:
    return run_em(samples, init, cfg).model


def prox_em_fit(samples: WeightedSampleSet, init: SparseMixtureModel, prox: ProxConfig,
                cfg: EmConfig = EmConfig()) -> SparseMixtureModel:
    return run_em(samples, init, cfg, prox).model


def fixed_group_em(samples: WeightedSampleSet, fixed, free_init, prox: ProxConfig | None = None,
                   cfg: EmConfig = EmConfig(), d: int | None = None, B: int = 1) -> SparseMixtureModel:
    """Refit the ``free_init`` components while holding ``fixed`` ones unchanged.

    Samples are reweighted by the posterior probability of the free group,
    the free group is fitted with (Prox-)EM on weights rescaled to sum to
    one, and its weights are scaled back by the free mass.
    """
    fixed = list(fixed)
    free = list(free_init)
    comps = fixed + free
    if d is None:
        d = samples.d
    if not free:
        return SparseMixtureModel(d, tuple(fixed), B, weight_tol=1e-9)
    alpha_free = 1.0 - math.fsum(c.alpha for c in fixed)
    if alpha_free <= 0.0:
        warnings.warn("free group has zero mass; its components are dropped", stacklevel=2)
        return SparseMixtureModel.normalized(d, fixed, B)
    free_model = SparseMixtureModel.normalized(d, free, B)
    if not fixed:
        return run_em(samples, free_model, cfg, prox).model
    logj = log_density_matrix(comps, samples.points, B)
    total = logsumexp(logj, axis=1)
    free_log = logsumexp(logj[:, len(fixed):], axis=1)
    beta_free = np.exp(free_log - total)
    w_bar = samples.weights * beta_free
    if w_bar.sum() < DEGENERATE_MASS:
        warnings.warn("free group carries no posterior mass; kept at initial values", stacklevel=2)
        return SparseMixtureModel.normalized(d, comps, B)
    fitted = run_em(samples.with_weights(w_bar), free_model, cfg, prox).model
    refit = [c.with_alpha(c.alpha * alpha_free) for c in fitted.components]
    return SparseMixtureModel(d, tuple(fixed + refit), B, weight_tol=1e-9)


def circular_mean_var(values, weights) -> tuple[float, float]:
    """Weighted circular mean and the weighted variance of residuals about it."""
    w = np.asarray(weights, dtype=float)
    ang = 2.0 * np.pi * np.asarray(values, dtype=float)
    mu = float(wrap(np.arctan2(w @ np.sin(ang), w @ np.cos(ang)) / (2.0 * np.pi)))
    r = centered_residual(values, mu)
    return mu, float(w @ (r * r) / w.sum())


def _component_1d(family: str, mean: float, var: float, alpha: float) -> MixtureComponent:
    if family == VON_MISES:
        kappa = 1.0 / (4.0 * np.pi**2 * var)
        return MixtureComponent((0,), alpha, VON_MISES, [mean], kappa=[kappa])
    if family == WRAPPED_DIAG:
        return MixtureComponent((0,), alpha, WRAPPED_DIAG, [mean], [var])
    return MixtureComponent((0,), alpha, WRAPPED_FULL, [mean], [[var]])


def _random_init_1d(values, weights, k: int, family: str, rng: np.random.Generator,
                    include_uniform: bool, B: int) -> SparseMixtureModel:
    p = weights / weights.sum()
    means = values[rng.choice(values.size, size=k, replace=False, p=p)] if np.count_nonzero(p) >= k \
        else rng.random(k)
    _, var = circular_mean_var(values, weights)
    var = max(var / k, 1e-4)
    n = k + int(include_uniform)
    comps = [_component_1d(family, float(m), var, 1.0 / n) for m in means]
    if include_uniform:
        comps.append(MixtureComponent.uniform(1.0 / n))
    return SparseMixtureModel.normalized(1, comps, B)


@dataclass
class BicResult:
    k_opt: int
    model: SparseMixtureModel
    bic: dict[int, float]
    loglik: dict[int, float]


def bic_score(loglik: float, k: int, n: float) -> float:
    """-2 log L + (3k - 1) log n."""
    return -2.0 * loglik + (3 * k - 1) * math.log(max(n, 2.0))


def bic_select(samples1d: UnivariateWeightedSamples, k_max: int, family: str = WRAPPED_FULL,
               cfg: EmConfig = EmConfig(), B: int = 1, include_uniform: bool = True,
               restarts: int = 4, seed=None) -> BicResult:
    """Fit univariate mixtures with k = 1..k_max components and keep the best BIC.

    Each k is fitted from ``restarts`` random initializations (means drawn
    from the samples, variance from the weighted circular variance); the
    restart with the highest likelihood represents k.
    """
    if k_max < 1:
        raise ValueError("k_max must be at least 1")
    values = samples1d.values
    weights = samples1d.weights
    data = WeightedSampleSet(values[:, None], weights)
    n = samples1d.total_weight
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    scores: dict[int, float] = {}
    logliks: dict[int, float] = {}
    fits: dict[int, SparseMixtureModel] = {}
    for k in range(1, k_max + 1):
        best = None
        for _ in range(restarts):
            init = _random_init_1d(values, weights, k, family, rng, include_uniform, B)
            try:
                res = run_em(data, init, cfg)
            except NumericError as exc:
                log.debug("restart failed for k=%d: %s", k, exc)
                continue
            if best is None or res.loglik > best.loglik:
                best = res
        if best is None:
            continue
        fits[k] = best.model
        logliks[k] = best.loglik
        scores[k] = bic_score(best.loglik, k, n)
    if not scores:
        raise NumericError("every BIC fit degenerated")
    k_opt = min(scores, key=lambda k: (scores[k], k))
    return BicResult(k_opt, fits[k_opt], scores, logliks)
