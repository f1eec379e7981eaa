"""Shared test helpers and independent reference implementations."""

import itertools
import math

import numpy as np


def random_spd(rng, m, scale=1.0, jitter=1e-2):
    A = rng.normal(size=(m, m))
    return scale * (A @ A.T / m + jitter * np.eye(m))


def brute_wrapped_normal(x, mean, cov, B):
    """Direct lattice sum over [-B, B]^m of the plain Gaussian density at x - mean + l."""
    x = np.asarray(x, dtype=float)
    mean = np.asarray(mean, dtype=float)
    cov = np.atleast_2d(cov)
    prec = np.linalg.inv(cov)
    norm = 1.0 / math.sqrt((2 * math.pi) ** len(mean) * np.linalg.det(cov))
    total = 0.0
    for l in itertools.product(range(-B, B + 1), repeat=len(mean)):
        y = x - mean + np.array(l)
        total += norm * math.exp(-0.5 * y @ prec @ y)
    return total


def ks_quadratic(values, weights, cdf):
    """O(N^2) weighted KS: the ECDF is recomputed from scratch at every sample."""
    values = np.asarray(values, dtype=float)
    weights = np.asarray(weights, dtype=float)
    W = weights.sum()
    sup = 0.0
    for t in values:
        right = sum(w for v, w in zip(values, weights) if v <= t) / W
        left = sum(w for v, w in zip(values, weights) if v < t) / W
        F = cdf(t)
        sup = max(sup, abs(right - F), abs(F - left))
    n_eff = W**2 / np.dot(weights, weights)
    return math.sqrt(n_eff) * sup


# nodeid -> outcome for every test of the session, and one summary line per acceptance criterion
OUTCOMES: dict[str, str] = {}
CRITERIA: dict[int, str] = {}
