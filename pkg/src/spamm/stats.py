"""Weighted ECDF, Kolmogorov-Smirnov distance to the uniform law, weighted moments."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .samples import UnivariateWeightedSamples, WeightedSampleSet


@dataclass(frozen=True)
class KsResult:
    statistic: float
    sup_deviation: float
    effective_n: float

    def to_dict(self) -> dict:
        return asdict(self)


class WeightedEcdf:
    """Right-continuous step function F_N(t) = sum_{x_n <= t} w_n / sum w."""

    def __init__(self, samples: UnivariateWeightedSamples):
        total = samples.total_weight
        if not total > 0:
            raise ValueError("all weights are zero")
        order = np.argsort(samples.values, kind="stable")
        self.values = samples.values[order]
        self.cumulative = np.cumsum(samples.weights[order]) / total
        self.cumulative[-1] = 1.0

    def __call__(self, t):
        idx = np.searchsorted(self.values, t, side="right")
        padded = np.concatenate(([0.0], self.cumulative))
        return padded[idx]


def weighted_ecdf(samples: UnivariateWeightedSamples) -> WeightedEcdf:
    return WeightedEcdf(samples)


def ks_distance(samples: UnivariateWeightedSamples, cdf) -> KsResult:
    """Scaled KS distance sqrt(n_eff) * ||F - F_N||_inf against a continuous ``cdf``."""
    ecdf = WeightedEcdf(samples)
    F = np.asarray(cdf(ecdf.values), dtype=float)
    upper = ecdf.cumulative - F
    lower = F - np.concatenate(([0.0], ecdf.cumulative[:-1]))
    sup = float(max(upper.max(), lower.max(), 0.0))
    n_eff = samples.effective_n
    return KsResult(float(np.sqrt(n_eff) * sup), sup, float(n_eff))


def ks_uniform_distance(samples: UnivariateWeightedSamples) -> KsResult:
    """KS distance to Uniform[0, 1) (F(x) = x)."""
    return ks_distance(samples, lambda x: x)


def weighted_mean(samples: WeightedSampleSet) -> np.ndarray:
    W = samples.total_weight
    if not W > 0:
        raise ValueError("zero total weight")
    return samples.weights @ samples.points / W


def _scatter(samples: WeightedSampleSet) -> np.ndarray:
    mu = weighted_mean(samples)
    xc = samples.points - mu
    return (samples.weights[:, None] * xc).T @ xc


def weighted_covariance(samples: WeightedSampleSet) -> np.ndarray:
    """Unbiased weighted covariance with normalization 1 / (sum w - 1)."""
    W = samples.total_weight
    if W <= 1.0:
        raise ValueError(f"total weight {W} must exceed 1 for the unbiased covariance")
    S = _scatter(samples) / (W - 1.0)
    return 0.5 * (S + S.T)


def correlation_matrix(samples: WeightedSampleSet) -> np.ndarray:
    """Pearson correlation of the weighted samples.

    Coordinates with zero variance have their row and column set to NaN.
    """
    S = _scatter(samples)
    S = 0.5 * (S + S.T)
    var = np.diag(S).copy()
    scale = max(float(var.max(initial=0.0)), 1e-300)
    defined = var > 1e-14 * scale
    v = np.where(defined, var, 1.0)
    C = S / np.sqrt(np.outer(v, v))
    C = np.clip(C, -1.0, 1.0)
    np.fill_diagonal(C, 1.0)
    C[~defined, :] = np.nan
    C[:, ~defined] = np.nan
    return C
