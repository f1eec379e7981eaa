"""Component densities on the torus and mixture evaluation.

All densities are evaluated in log space internally; the ``*_pdf`` wrappers
exponentiate.  Points may be a single vector or an ``(N, m)`` batch.
"""

from __future__ import annotations

import itertools
import math
from functools import lru_cache

import numpy as np

from .errors import DomainError, ZeroDensityError
from .model import UNIFORM, VON_MISES, WRAPPED_DIAG, WRAPPED_FULL, MixtureComponent, SparseMixtureModel
from .samples import WeightedSampleSet, wrap

LOG_2PI = math.log(2.0 * math.pi)
_I0_SWITCH = 15.0


def logsumexp(a, axis=None, keepdims=False):
    """log(sum(exp(a))) along ``axis``; all-(-inf) slices give -inf."""
    a = np.asarray(a, dtype=float)
    m = np.max(a, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(a - m), axis=axis, keepdims=True)) + m
    return out if keepdims else np.squeeze(out, axis=axis) if axis is not None else out.reshape(())[()]


def _i0_series(x: np.ndarray) -> np.ndarray:
    q = 0.25 * x * x
    term = np.ones_like(x)
    total = np.ones_like(x)
    k = 1
    while True:
        term = term * q / (k * k)
        total = total + term
        if np.all(term <= 1e-17 * total) or k > 200:
            return total
        k += 1


def _i0_asymptotic_sum(x: np.ndarray) -> np.ndarray:
    # sum_k ((2k-1)!!)^2 / (k! 8^k x^k), truncated at the smallest term
    total = np.ones_like(x)
    term = np.ones_like(x)
    active = np.ones(x.shape, dtype=bool)
    for k in range(1, 200):
        nxt = term * (2 * k - 1) ** 2 / (8.0 * k * x)
        active &= (nxt < term) & (nxt > 1e-17 * total)
        if not active.any():
            break
        term = np.where(active, nxt, term)
        total = total + np.where(active, nxt, 0.0)
    return total


def log_i0(kappa) -> np.ndarray:
    """log I0(kappa) for kappa >= 0, overflow-free for large kappa."""
    k = np.asarray(kappa, dtype=float)
    out = np.empty_like(k)
    small = k < _I0_SWITCH
    if np.any(small):
        out[small] = np.log(_i0_series(k[small]))
    if np.any(~small):
        kb = k[~small]
        out[~small] = kb - 0.5 * np.log(2.0 * np.pi * kb) + np.log(_i0_asymptotic_sum(kb))
    return out


def i0(kappa) -> np.ndarray:
    """Modified Bessel function of the first kind, order zero."""
    return np.exp(log_i0(kappa))


@lru_cache(maxsize=64)
def lattice(m: int, B: int) -> np.ndarray:
    """All integer shifts in ([-B, B] ∩ Z)^m as an (S, m) array."""
    r = range(-B, B + 1)
    return np.array(list(itertools.product(r, repeat=m)), dtype=float).reshape(-1, m)


def centered_residual(x, mean) -> np.ndarray:
    """x - mean reduced to [-1/2, 1/2) coordinatewise."""
    return wrap(np.asarray(x, dtype=float) - mean + 0.5) - 0.5


def _as_batch(x, m: int) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    single = x.ndim <= 1
    x = np.atleast_2d(x).reshape(-1, x.shape[-1] if x.ndim else 1)
    if x.shape[1] != m:
        raise ValueError(f"point dimension {x.shape[1]} does not match parameter dimension {m}")
    return x, single


def _cholesky(cov: np.ndarray) -> np.ndarray:
    cov = np.asarray(cov, dtype=float)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise ValueError("covariance must be square")
    if not np.allclose(cov, cov.T, rtol=0, atol=1e-12 * max(1.0, float(np.abs(cov).max()))):
        raise DomainError("covariance is not symmetric")
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        raise DomainError("covariance is not positive definite") from None


def shifted_gaussian_logpdf(x, mean, cov, B: int):
    """Per-shift log N(mean + r + l | mean, cov) with r the centered residual.

    Returns an ``(N, S)`` array together with the shift lattice ``(S, m)``.
    Summing over shifts in linear space gives the truncated wrapped density.
    """
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    m = mean.shape[0]
    xb, _ = _as_batch(x, m)
    L = _cholesky(cov)
    Linv = np.linalg.inv(L)
    shifts = lattice(m, B)
    # |Linv (r + l)|^2 expanded so only (N, S) arrays are formed
    zr = centered_residual(xb, mean) @ Linv.T
    zl = shifts @ Linv.T
    quad = (zr * zr).sum(axis=1)[:, None] + 2.0 * (zr @ zl.T) + (zl * zl).sum(axis=1)[None, :]
    logdet = 2.0 * np.log(np.diag(L)).sum()
    return -0.5 * quad - 0.5 * (m * LOG_2PI + logdet), shifts


def wrapped_normal_logpdf(x, mean, cov, B: int = 1):
    if B < 0:
        raise ValueError("B must be non-negative")
    logp, _ = shifted_gaussian_logpdf(x, mean, cov, B)
    out = logsumexp(logp, axis=1)
    return out[0] if np.ndim(x) <= 1 else out


def wrapped_normal_pdf(x, mean, cov, B: int = 1):
    """Wrapped Gaussian density truncated to the (2B+1)^m nearest lattice images."""
    return np.exp(wrapped_normal_logpdf(x, mean, cov, B))


def _wrapped_diag_terms(xb: np.ndarray, mean: np.ndarray, var: np.ndarray, B: int) -> np.ndarray:
    """(N, m, 2B+1) per-coordinate log terms."""
    shifts = np.arange(-B, B + 1, dtype=float)
    r = centered_residual(xb, mean)
    y = r[:, :, None] + shifts[None, None, :]
    return -0.5 * y * y / var[None, :, None] - 0.5 * (LOG_2PI + np.log(var))[None, :, None]


def wrapped_normal_logpdf_diag(x, mean, variances, B: int = 1):
    var = np.atleast_1d(np.asarray(variances, dtype=float))
    if np.any(var <= 0):
        raise DomainError("variances must be strictly positive")
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    if mean.shape != var.shape:
        raise ValueError("mean and variances differ in length")
    xb, single = _as_batch(x, mean.shape[0])
    out = logsumexp(_wrapped_diag_terms(xb, mean, var, B), axis=2).sum(axis=1)
    return out[0] if single else out


def wrapped_normal_pdf_diag(x, mean, variances, B: int = 1):
    return np.exp(wrapped_normal_logpdf_diag(x, mean, variances, B))


def von_mises_logpdf(x, mean, kappa):
    kappa = np.atleast_1d(np.asarray(kappa, dtype=float))
    if np.any(kappa <= 0):
        raise DomainError("kappa must be strictly positive")
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    xb, single = _as_batch(x, mean.shape[0])
    out = (kappa * np.cos(2.0 * np.pi * (xb - mean))).sum(axis=1) - log_i0(kappa).sum()
    return out[0] if single else out


def von_mises_pdf(x, mean, kappa):
    """Product of von Mises densities with unit period."""
    return np.exp(von_mises_logpdf(x, mean, kappa))


def component_logpdf(comp: MixtureComponent, X: np.ndarray, B: int) -> np.ndarray:
    """log p(x_u | theta) for rows of the full ``(N, d)`` array ``X``."""
    X = np.atleast_2d(X)
    if comp.family == UNIFORM:
        return np.zeros(X.shape[0])
    xu = X[:, list(comp.u)]
    if comp.family == WRAPPED_FULL:
        return np.atleast_1d(wrapped_normal_logpdf(xu, comp.mean, comp.cov, B))
    if comp.family == WRAPPED_DIAG:
        return np.atleast_1d(wrapped_normal_logpdf_diag(xu, comp.mean, comp.cov, B))
    if comp.family == VON_MISES:
        return np.atleast_1d(von_mises_logpdf(xu, comp.mean, comp.kappa))
    raise ValueError(comp.family)


def component_pdf(comp: MixtureComponent, X: np.ndarray, B: int) -> np.ndarray:
    return np.exp(component_logpdf(comp, X, B))


def component_peak(comp: MixtureComponent, B: int) -> float:
    """Maximum of the component density (attained at the mean)."""
    if comp.family == UNIFORM:
        return 1.0
    return float(np.exp(_logpdf_restricted(comp, comp.mean[None, :], B)[0]))


def _logpdf_restricted(comp: MixtureComponent, xu: np.ndarray, B: int) -> np.ndarray:
    if comp.family == WRAPPED_FULL:
        return np.atleast_1d(wrapped_normal_logpdf(xu, comp.mean, comp.cov, B))
    if comp.family == WRAPPED_DIAG:
        return np.atleast_1d(wrapped_normal_logpdf_diag(xu, comp.mean, comp.cov, B))
    return np.atleast_1d(von_mises_logpdf(xu, comp.mean, comp.kappa))


def log_density_matrix(components, X: np.ndarray, B: int) -> np.ndarray:
    """``(N, K)`` matrix of log alpha_k + log p_k(x_n)."""
    X = np.atleast_2d(X)
    cols = []
    with np.errstate(divide="ignore"):
        for c in components:
            cols.append(math.log(c.alpha) if c.alpha > 0 else -np.inf)
    out = np.empty((X.shape[0], len(components)))
    for k, c in enumerate(components):
        out[:, k] = cols[k] + component_logpdf(c, X, B)
    return out


def mixture_logpdf(model: SparseMixtureModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    single = X.ndim == 1
    Xb = np.atleast_2d(X)
    if Xb.shape[1] != model.d:
        raise ValueError(f"points have dimension {Xb.shape[1]}, model has {model.d}")
    out = logsumexp(log_density_matrix(model.components, Xb, model.truncation_B), axis=1)
    return out[0] if single else out


def mixture_pdf(model: SparseMixtureModel, X):
    """f(x) = sum_k alpha_k p(x_{u_k} | theta_k)."""
    return np.exp(mixture_logpdf(model, X))


def log_likelihood(model: SparseMixtureModel, samples: WeightedSampleSet) -> float:
    """Weighted log-likelihood; ``-inf`` when a positively weighted sample has zero density."""
    logf = mixture_logpdf(model, samples.points)
    w = samples.weights
    mask = w > 0
    return float(np.dot(w[mask], logf[mask]))


def posterior_responsibilities(model: SparseMixtureModel, X) -> np.ndarray:
    """Posterior component probabilities; rows sum to one."""
    X = np.asarray(X, dtype=float)
    single = X.ndim == 1
    Xb = np.atleast_2d(X)
    logj = log_density_matrix(model.components, Xb, model.truncation_B)
    total = logsumexp(logj, axis=1)
    bad = np.flatnonzero(~np.isfinite(total))
    if bad.size:
        raise ZeroDensityError(int(bad[0]))
    beta = np.exp(logj - total[:, None])
    beta /= beta.sum(axis=1, keepdims=True)
    return beta[0] if single else beta
