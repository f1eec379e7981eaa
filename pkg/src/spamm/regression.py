"""Regression by conditional expectation under a fitted joint torus density."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .densities import centered_residual, log_density_matrix, logsumexp
from .em import EmConfig, run_em
from .learner import LearnerConfig, detect_active_set, learn_sparse_mm
from .marginals import marginal_component
from .model import WRAPPED_FULL, MixtureComponent, SparseMixtureModel
from .samples import WeightedSampleSet, wrap
from .synth import mse

TOP = math.nextafter(1.0, 0.0)


@dataclass
class MinMaxScaler:
    """Affine map of each column onto [0, 1), fitted on training data."""

    lo: np.ndarray
    hi: np.ndarray

    @classmethod
    def fit(cls, X) -> MinMaxScaler:
        X = np.asarray(X, dtype=float)
        return cls(X.min(axis=0), X.max(axis=0))

    @property
    def span(self) -> np.ndarray:
        s = self.hi - self.lo
        return np.where(s > 0, s, 1.0)

    def transform(self, X) -> np.ndarray:
        """Scaled values, clipped into [0, 1) so they are valid torus points."""
        Z = (np.asarray(X, dtype=float) - self.lo) / self.span
        return np.clip(Z, 0.0, TOP)

    def inverse(self, Z, column: int | None = None) -> np.ndarray:
        Z = np.asarray(Z, dtype=float)
        if column is None:
            return self.lo + Z * self.span
        return self.lo[column] + Z * self.span[column]

    def to_dict(self) -> dict:
        return {"min": self.lo.tolist(), "max": self.hi.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> MinMaxScaler:
        return cls(np.array(d["min"], dtype=float), np.array(d["max"], dtype=float))


@dataclass
class Prediction:
    wrapped: np.ndarray
    unwrapped: np.ndarray
    circular: np.ndarray


def conditional_expectation(model: SparseMixtureModel, X, target: int) -> Prediction:
    """Posterior-weighted conditional mean of coordinate ``target`` given the others.

    ``X`` holds full rows (the target column is ignored).  Component weights
    come from each component's marginal on the non-target coordinates.  A
    component that does not involve the target contributes 1/2, the mean of
    the uniform law.  For Gaussian components the features are matched to
    the nearest lattice image of the mean before the linear update.

    Three aggregates are returned: the plain average of the per-component
    means (``unwrapped``), its reduction mod 1 (``wrapped``) and the
    circular mean of the component means (``circular``).
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    feats = [i for i in range(model.d) if i != target]
    margs = [marginal_component(c, feats) for c in model.components]
    logj = log_density_matrix(margs, X, model.truncation_B)
    post = np.exp(logj - logsumexp(logj, axis=1, keepdims=True))
    means = np.empty((X.shape[0], len(model.components)))
    for k, c in enumerate(model.components):
        means[:, k] = _component_conditional_mean(c, X, target)
    unwrapped = (post * means).sum(axis=1)
    ang = 2.0 * np.pi * means
    circ = wrap(np.arctan2((post * np.sin(ang)).sum(axis=1), (post * np.cos(ang)).sum(axis=1)) / (2.0 * np.pi))
    return Prediction(wrap(unwrapped), unwrapped, circ)


def _component_conditional_mean(c: MixtureComponent, X: np.ndarray, target: int) -> np.ndarray:
    if target not in c.u:
        return np.full(X.shape[0], 0.5)
    t = c.u.index(target)
    rest = [j for j in range(len(c.u)) if j != t]
    if not rest or c.family != WRAPPED_FULL:
        return np.full(X.shape[0], float(c.mean[t]))
    cols = [c.u[j] for j in rest]
    S = c.cov
    gain = np.linalg.solve(S[np.ix_(rest, rest)], S[np.ix_(rest, [t])])[:, 0]
    r = centered_residual(X[:, cols], c.mean[rest])
    return c.mean[t] + r @ gain


def circular_error(a, b) -> np.ndarray:
    """Signed difference on the unit circle, in [-1/2, 1/2)."""
    return centered_residual(a, b)


@dataclass
class RegressionConfig:
    method: str = "learner"
    n_components: int = 8
    circular: bool = False
    learner: LearnerConfig = field(default_factory=LearnerConfig)
    em: EmConfig = field(default_factory=EmConfig)
    init_var: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if self.method not in ("learner", "em"):
            raise ValueError(f"unknown method {self.method!r}")


def em_joint_init(samples: WeightedSampleSet, k: int, seed: int, var: float, B: int = 1) -> SparseMixtureModel:
    """k full-dimensional wrapped Gaussians centred on distinct random samples."""
    rng = np.random.default_rng(seed)
    n = samples.n
    p = samples.weights / samples.total_weight
    idx = rng.choice(n, size=min(k, np.count_nonzero(p)), replace=False, p=p)
    d = samples.d
    comps = [MixtureComponent(tuple(range(d)), 1.0 / idx.size, WRAPPED_FULL, samples.points[i], var * np.eye(d))
             for i in idx]
    return SparseMixtureModel.normalized(d, comps, B)


@dataclass
class TorusRegressor:
    """Joint density over (features, target) used to predict the target column."""

    model: SparseMixtureModel
    target: int
    scaler: MinMaxScaler | None = None

    def predict_scaled(self, Z) -> Prediction:
        return conditional_expectation(self.model, Z, self.target)

    def predict(self, X) -> Prediction:
        """Predictions from raw rows; results are mapped back to raw units."""
        Z = self.scaler.transform(X) if self.scaler is not None else np.asarray(X, dtype=float)
        p = self.predict_scaled(Z)
        if self.scaler is None:
            return p
        inv = lambda v: self.scaler.inverse(v, self.target)  # noqa: E731
        return Prediction(inv(p.wrapped), inv(p.unwrapped), inv(p.circular))


def fit_regressor(Z: np.ndarray, target: int, cfg: RegressionConfig, scaler: MinMaxScaler | None = None) -> TorusRegressor:
    """Fit the joint density on already scaled rows ``Z`` (values in [0, 1))."""
    samples = WeightedSampleSet(Z, np.ones(Z.shape[0]))
    if cfg.method == "em":
        init = em_joint_init(samples, cfg.n_components, cfg.seed, cfg.init_var, cfg.learner.B)
        model = run_em(samples, init, cfg.em).model
    else:
        report = detect_active_set(samples, cfg.learner.eps_ks, cfg.learner.eps_c, force=(target,))
        model = learn_sparse_mm(samples, cfg.learner, report).model
    return TorusRegressor(model, target, scaler)


def scaled_mse(reg: TorusRegressor, Z: np.ndarray, circular: bool = False) -> float:
    """MSE of the target in scaled units; circular mode measures wrapped differences."""
    p = reg.predict_scaled(Z)
    y = Z[:, reg.target]
    if circular:
        return float(np.mean(circular_error(p.circular, y) ** 2))
    return mse(np.clip(p.unwrapped, 0.0, 1.0), y)


def drop_incomplete(data: np.ndarray) -> tuple[np.ndarray, int]:
    keep = np.all(np.isfinite(data), axis=1)
    return data[keep], int((~keep).sum())


def torus_linear_data(n: int, noise: float = 0.01, shift: float = 0.1, seed: int = 0) -> np.ndarray:
    """Rows (x, (x + shift + noise) mod 1) with x uniform on the circle."""
    rng = np.random.default_rng(seed)
    x = rng.random(n)
    y = wrap(x + shift + noise * rng.standard_normal(n))
    return np.column_stack([x, y])
