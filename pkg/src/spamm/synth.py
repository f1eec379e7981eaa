"""Benchmark densities, rejection sampling and Monte-Carlo error metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.interpolate import BSpline

from .densities import centered_residual, component_peak, log_i0, mixture_pdf
from .model import VON_MISES, WRAPPED_DIAG, WRAPPED_FULL, MixtureComponent, SparseMixtureModel
from .samples import WeightedSampleSet

BATCH = 1 << 16
MC_CHUNK = 1 << 15


@dataclass(frozen=True)
class DensityOracle:
    """A density on the d-torus with a known upper bound ``bound``."""

    name: str
    d: int
    evaluate: Callable[[np.ndarray], np.ndarray]
    bound: float
    model: SparseMixtureModel | None = None
    # optional screen(X, level) -> mask; False only where density < level
    screen: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None

    def __call__(self, X) -> np.ndarray:
        return self.evaluate(np.atleast_2d(np.asarray(X, dtype=float)))

    def check_bound(self, n_probe: int = 10_000, seed: int = 0) -> float:
        """Largest density value on a uniform probe; should not exceed ``bound``."""
        X = np.random.default_rng(seed).random((n_probe, self.d))
        return float(self(X).max())


def mixture_bound(model: SparseMixtureModel) -> float:
    """sum_k alpha_k * max p_k, an upper bound on the mixture density."""
    return math.fsum(c.alpha * component_peak(c, model.truncation_B) for c in model.components)


def _coordinate_factors(comp: MixtureComponent, B: int):
    """Per-coordinate functions whose product dominates the component density.

    Returns ``(scale, factor, fmax)`` with p(x) <= scale * prod_i factor(x_i, i)
    and factor <= fmax[i].  For a full covariance the quadratic form is
    bounded by the largest eigenvalue, which makes the lattice sum separable.
    """
    shifts = np.arange(-B, B + 1, dtype=float)
    m = len(comp.u)
    if comp.family == VON_MISES:
        kappa = comp.kappa
        scale = math.exp(-float(log_i0(kappa).sum()) + float(kappa.sum()))

        def factor(x, i):
            return np.exp(kappa[i] * (np.cos(2.0 * np.pi * (x - comp.mean[i])) - 1.0))

        return scale, factor, np.ones(m)
    if comp.family == WRAPPED_DIAG:
        var = comp.cov
        scale = float(np.prod(1.0 / np.sqrt(2.0 * np.pi * var)))
    else:
        lam = float(np.linalg.eigvalsh(comp.cov).max())
        var = np.full(m, lam)
        scale = float(1.0 / math.sqrt((2.0 * np.pi) ** m * np.linalg.det(comp.cov)))

    def factor(x, i):
        y = centered_residual(x, comp.mean[i])[:, None] + shifts
        return np.exp(-0.5 * y * y / var[i]).sum(axis=1)

    fmax = np.array([factor(np.array([comp.mean[i]]), i)[0] for i in range(m)])
    return scale, factor, fmax


def mixture_screen(model: SparseMixtureModel):
    """Coordinate-by-coordinate screen for rejection sampling from a mixture.

    A candidate is dropped as soon as the summed component envelopes, with
    unseen coordinates at their maximum, fall below the acceptance level.
    """
    B = model.truncation_B
    parts = []
    floor = 0.0
    for c in model.components:
        if c.is_uniform:
            floor += c.alpha
            continue
        scale, factor, fmax = _coordinate_factors(c, B)
        parts.append((c, c.alpha * scale, factor, fmax))
    depth = max((len(c.u) for c, *_ in parts), default=0)

    def screen(X, level):
        idx = np.arange(X.shape[0])
        env = [np.full(idx.size, a * float(np.prod(fm))) for _, a, _, fm in parts]
        for j in range(depth):
            for k, (c, _, factor, fmax) in enumerate(parts):
                if j < len(c.u):
                    env[k] = env[k] * factor(X[idx, c.u[j]], j) / fmax[j]
            total = floor + sum(env)
            alive = total >= level[idx]
            idx = idx[alive]
            env = [e[alive] for e in env]
            if not idx.size:
                break
        mask = np.zeros(X.shape[0], dtype=bool)
        mask[idx] = True
        return mask

    return screen


def mixture_oracle(model: SparseMixtureModel, name: str = "mixture") -> DensityOracle:
    return DensityOracle(name, model.d, lambda X: mixture_pdf(model, X), mixture_bound(model), model,
                         mixture_screen(model))


def _gauss(u, alpha, mean, var=1e-3) -> MixtureComponent:
    m = len(u)
    return MixtureComponent(tuple(u), alpha, WRAPPED_FULL, [mean] * m, var * np.eye(m))


def f1_model() -> SparseMixtureModel:
    """Two components on T^15: weight 0.7 on {0,1,8} at 0.5, weight 0.3 on {0,14} at 0.25."""
    return SparseMixtureModel(15, (_gauss((0, 1, 8), 0.7, 0.5), _gauss((0, 14), 0.3, 0.25)))


def f2_model(third_mean: float = 0.15) -> SparseMixtureModel:
    """f1 reweighted to (0.7, 0.2) plus a univariate component on coordinate 5."""
    return SparseMixtureModel(15, (
        _gauss((0, 1, 8), 0.7, 0.5),
        _gauss((0, 14), 0.2, 0.25),
        _gauss((5,), 0.1, third_mean),
    ))


def bspline_density(order: int) -> Callable[[np.ndarray], np.ndarray]:
    """Cardinal B-spline of the given order squeezed onto [0, 1] with unit integral."""
    basis = BSpline.basis_element(np.arange(order + 1, dtype=float), extrapolate=False)

    def f(x):
        x = np.asarray(x, dtype=float)
        return np.nan_to_num(order * basis(order * x), nan=0.0)

    return f


F3_GROUPS = ((0, 2, 7), (1, 4, 5), (3, 6, 8))
F3_ORDERS = (2, 4, 6)


def f3_oracle() -> DensityOracle:
    """Average of three products B2 * B4 * B6 over disjoint coordinate triples of T^9.

    Each product integrates to one, so the average is normalized.
    """
    splines = [bspline_density(o) for o in F3_ORDERS]
    peak = math.prod(float(s(0.5)) for s in splines)

    def evaluate(X):
        X = np.atleast_2d(X)
        total = np.zeros(X.shape[0])
        for group in F3_GROUPS:
            term = np.ones(X.shape[0])
            for s, i in zip(splines, group):
                term *= s(X[:, i])
            total += term
        return total / len(F3_GROUPS)

    return DensityOracle("f3", 9, evaluate, peak)


def make_test_function(name: str) -> DensityOracle:
    if name == "f1":
        return mixture_oracle(f1_model(), "f1")
    if name == "f2":
        return mixture_oracle(f2_model(0.15), "f2")
    if name == "f2_alt":
        return mixture_oracle(f2_model(0.3), "f2_alt")
    if name == "f3":
        return f3_oracle()
    raise ValueError(f"unknown test function {name!r}")


def rejection_sample(oracle: DensityOracle, n: int, seed: int = 0, batch: int = BATCH,
                     use_screen: bool = True) -> WeightedSampleSet:
    """``n`` exact draws from ``oracle`` using uniform proposals on the torus.

    Batch ``b`` uses the generator seeded with ``(seed, b)``, so the output
    depends only on ``seed`` and ``batch``.  The oracle's screen only skips
    density evaluations that could not lead to acceptance; the accepted
    points are the same with or without it.
    """
    if n < 0:
        raise ValueError("n must be non-negative")
    if not math.isfinite(oracle.bound) or oracle.bound <= 0:
        raise ValueError("oracle bound must be finite and positive")
    accepted = []
    count = 0
    b = 0
    while count < n:
        rng = np.random.default_rng([seed, b])
        cand = rng.random((batch, oracle.d))
        u = rng.random(batch)
        level = u * oracle.bound
        if use_screen and oracle.screen is not None:
            keep = oracle.screen(cand, level)
            sub = np.flatnonzero(keep)
            keep[sub] = level[sub] <= oracle(cand[sub])
        else:
            keep = level <= oracle(cand)
        if b == 0 and keep.mean() < 1e-6:
            raise ValueError(f"acceptance rate {keep.mean():.2e} after {batch} proposals; use a tighter bound")
        accepted.append(cand[keep])
        count += int(keep.sum())
        b += 1
    pts = np.concatenate(accepted)[:n] if accepted else np.empty((0, oracle.d))
    return WeightedSampleSet(pts, np.ones(n))


def _mc_points(d: int, n_mc: int, seed: int):
    rng = np.random.default_rng(seed)
    done = 0
    while done < n_mc:
        k = min(MC_CHUNK, n_mc - done)
        yield rng.random((k, d))
        done += k


def mc_norm(f, p: int, n_mc: int, seed: int, d: int) -> float:
    """(1/N) sum |f(x_n)|^p over uniform points on the d-torus."""
    if n_mc < 1:
        raise ValueError("n_mc must be positive")
    total = 0.0
    for X in _mc_points(d, n_mc, seed):
        total += float(np.sum(np.abs(f(X)) ** p))
    return total / n_mc


def relative_lp_error(f_hat, f, p: int, n_mc: int, seed: int, d: int) -> float:
    """||f_hat - f||_p / ||f||_p with both norms on the same uniform points."""
    if n_mc < 1:
        raise ValueError("n_mc must be positive")
    num = den = 0.0
    for X in _mc_points(d, n_mc, seed):
        a = f_hat(X)
        b = f(X)
        num += float(np.sum(np.abs(a - b) ** p))
        den += float(np.sum(np.abs(b) ** p))
    if den == 0.0:
        raise ZeroDivisionError("reference function has zero norm on the MC points")
    return (num / den) ** (1.0 / p)


def mse(predictions, targets) -> float:
    a = np.asarray(predictions, dtype=float)
    b = np.asarray(targets, dtype=float)
    if a.shape != b.shape:
        raise ValueError("predictions and targets differ in shape")
    if a.size == 0:
        raise ValueError("empty input")
    return float(np.mean((a - b) ** 2))
