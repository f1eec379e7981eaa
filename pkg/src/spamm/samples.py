"""Weighted sample containers on the unit torus."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def wrap(x):
    """Reduce coordinates to the unit period, ``x - floor(x)`` in [0, 1)."""
    x = np.asarray(x, dtype=float)
    y = x - np.floor(x)
    # tiny negative inputs round up to exactly 1.0
    return np.where(y >= 1.0, 0.0, y)


def torus_point(coords) -> np.ndarray:
    return wrap(np.atleast_1d(np.asarray(coords, dtype=float)))


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class UnivariateWeightedSamples:
    values: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        v = np.ravel(np.asarray(self.values, dtype=float))
        w = np.ravel(np.asarray(self.weights, dtype=float))
        if v.shape != w.shape:
            raise ValueError(f"values ({v.size}) and weights ({w.size}) differ in length")
        if v.size == 0:
            raise ValueError("empty sample")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite and non-negative")
        if not np.all((v >= 0.0) & (v < 1.0)):
            raise ValueError("values must lie in [0, 1)")
        object.__setattr__(self, "values", _frozen(v))
        object.__setattr__(self, "weights", _frozen(w))

    @property
    def total_weight(self) -> float:
        return float(self.weights.sum())

    @property
    def effective_n(self) -> float:
        """``(sum w)^2 / sum w^2``; equals N for unit weights."""
        top = float(self.weights.max())
        if top == 0.0:
            return 0.0
        p = self.weights / top  # guards against underflow of tiny weights
        return float(p.sum() ** 2 / np.dot(p, p))


@dataclass(frozen=True, eq=False)
class WeightedSampleSet:
    """N points on the d-torus with non-negative weights.

    Points are validated to lie in [0, 1); use :meth:`from_raw` with
    ``wrap_values=True`` to reduce arbitrary reals modulo 1 instead.
    """

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.points, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if x.ndim != 2:
            raise ValueError("points must be an N x d array")
        w = np.ravel(np.asarray(self.weights, dtype=float))
        if w.shape[0] != x.shape[0]:
            raise ValueError(f"{x.shape[0]} points but {w.shape[0]} weights")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite and non-negative")
        if x.shape[0] and not w.sum() > 0:
            raise ValueError("total weight must be positive")
        if not np.all((x >= 0.0) & (x < 1.0)):
            raise ValueError("points must lie in [0, 1)")
        object.__setattr__(self, "points", _frozen(x))
        object.__setattr__(self, "weights", _frozen(w))

    @classmethod
    def from_raw(cls, points, weights=None, wrap_values: bool = False) -> WeightedSampleSet:
        x = np.asarray(points, dtype=float)
        if wrap_values:
            x = wrap(x)
        if weights is None:
            weights = np.ones(x.shape[0])
        return cls(x, weights)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]

    @property
    def total_weight(self) -> float:
        return float(self.weights.sum())

    def column(self, i: int, weights=None) -> UnivariateWeightedSamples:
        w = self.weights if weights is None else weights
        return UnivariateWeightedSamples(self.points[:, i], w)

    def with_weights(self, weights) -> WeightedSampleSet:
        return WeightedSampleSet(self.points, weights)

    def select(self, dims) -> WeightedSampleSet:
        return WeightedSampleSet(self.points[:, list(dims)], self.weights)
