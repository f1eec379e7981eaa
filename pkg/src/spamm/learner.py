"""Active-set detection and dimension-by-dimension growth of a sparse mixture."""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .densities import log_likelihood, posterior_responsibilities
from .em import EmConfig, ProxConfig, bic_select, fixed_group_em, run_em
from .errors import NumericError
from .marginals import merge_components
from .model import UNIFORM, VON_MISES, WRAPPED_DIAG, WRAPPED_FULL, MixtureComponent, SparseMixtureModel
from .samples import UnivariateWeightedSamples, WeightedSampleSet
from .stats import correlation_matrix, ks_uniform_distance

log = logging.getLogger(__name__)

LEARNER_MERGE_TOL = 1e-6


@dataclass
class ActiveSetReport:
    ks_per_dim: list[float]
    correlations: np.ndarray
    active: list[int]
    inactive: list[int]

    def to_dict(self) -> dict:
        corr = [[None if math.isnan(c) else float(c) for c in row] for row in np.asarray(self.correlations)]
        return {
            "ks_per_dim": [float(k) for k in self.ks_per_dim],
            "correlations": corr,
            "active": list(self.active),
            "inactive": list(self.inactive),
        }

    @classmethod
    def from_dict(cls, d: dict) -> ActiveSetReport:
        corr = np.array([[np.nan if c is None else c for c in row] for row in d["correlations"]], dtype=float)
        return cls(list(d["ks_per_dim"]), corr, list(d["active"]), list(d["inactive"]))


@dataclass(frozen=True)
class LearnerConfig:
    eps_ks: float = 5.0
    eps_c: float = 0.1
    gamma1: float = 3e-3
    gamma2: float = 1e-3
    k_max: int = 3
    family: str = WRAPPED_FULL
    em: EmConfig = field(default_factory=EmConfig)
    B: int = 1
    seed: int = 0
    restarts: int = 4

    def __post_init__(self):
        for name in ("eps_ks", "eps_c", "gamma1", "gamma2"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.k_max < 1:
            raise ValueError("k_max must be at least 1")
        if self.family not in (WRAPPED_FULL, WRAPPED_DIAG, VON_MISES):
            raise ValueError(f"unsupported family {self.family!r}")


def detect_active_set(samples: WeightedSampleSet, eps_ks: float, eps_c: float, force=()) -> ActiveSetReport:
    """Dimensions whose marginal is not uniform, plus those correlated with one.

    A dimension passes the KS gate when its scaled KS distance to the uniform
    law exceeds ``eps_ks``; a dimension that fails it is still active when its
    absolute correlation with an active dimension reaches ``eps_c`` (applied
    until no more dimensions join).  Dimensions in ``force`` are active
    regardless of their statistic.  Active dimensions are listed by
    decreasing KS statistic.
    """
    if samples.n < 2:
        raise ValueError("need at least two samples")
    ks = [ks_uniform_distance(samples.column(i)).statistic for i in range(samples.d)]
    corr = correlation_matrix(samples)
    active = {i for i in range(samples.d) if ks[i] > eps_ks} | {int(i) for i in force}
    grew = True
    while grew:
        grew = False
        for i in range(samples.d):
            if i in active:
                continue
            row = np.abs(corr[i, sorted(active)])
            if np.any(row >= eps_c):
                active.add(i)
                grew = True
    ordered = sorted(active, key=lambda i: (-ks[i], i))
    inactive = [i for i in range(samples.d) if i not in active]
    return ActiveSetReport(ks, corr, ordered, inactive)


def residual_active_test(samples: WeightedSampleSet, responsibilities, dim: int, eps_ks: float) -> bool:
    """KS gate on coordinate ``dim`` with sample weights w_n * beta_n."""
    beta = np.asarray(responsibilities, dtype=float)
    if np.any(beta < -1e-12) or np.any(beta > 1 + 1e-12):
        raise ValueError("responsibilities must lie in [0, 1]")
    w = samples.weights * np.clip(beta, 0.0, 1.0)
    if np.count_nonzero(w) < 2 or w.sum() <= 0:
        warnings.warn(f"component carries no reweighted mass on dimension {dim}", stacklevel=2)
        return False
    stat = ks_uniform_distance(UnivariateWeightedSamples(samples.points[:, dim], w)).statistic
    return stat > eps_ks


def _insert_dimension(parent: MixtureComponent, dim: int, child: MixtureComponent, alpha: float) -> MixtureComponent:
    """Product of ``parent`` and a univariate ``child`` on coordinate ``dim``."""
    if child.is_uniform:
        return parent.with_alpha(alpha)
    u = tuple(sorted(parent.u + (dim,)))
    order = np.argsort(parent.u + (dim,), kind="stable")
    family = child.family
    if parent.is_uniform:
        mean = child.mean
        if family == VON_MISES:
            return MixtureComponent(u, alpha, VON_MISES, mean, kappa=child.kappa)
        return MixtureComponent(u, alpha, family, mean, child.cov)
    mean = np.concatenate([parent.mean, child.mean])[order]
    if family == VON_MISES:
        kappa = np.concatenate([parent.kappa, child.kappa])[order]
        return MixtureComponent(u, alpha, VON_MISES, mean, kappa=kappa)
    if family == WRAPPED_DIAG:
        return MixtureComponent(u, alpha, WRAPPED_DIAG, mean, np.concatenate([parent.cov, child.cov])[order])
    m = len(parent.u)
    cov = np.zeros((m + 1, m + 1))
    cov[:m, :m] = parent.cov
    cov[m, m] = float(np.ravel(child.cov)[0])
    return MixtureComponent(u, alpha, WRAPPED_FULL, mean, cov[np.ix_(order, order)])


@dataclass
class LearnResult:
    model: SparseMixtureModel
    report: ActiveSetReport
    trace: list[dict]


def fit_conditional_marginal(samples: WeightedSampleSet, weights, dim: int, cfg: LearnerConfig, seed) -> SparseMixtureModel:
    """Univariate mixture (with a uniform part) for coordinate ``dim`` under ``weights``.

    The number of components is chosen by BIC and the chosen fit is then
    sparsified by Prox-EM with ``gamma2``.
    """
    data = UnivariateWeightedSamples(samples.points[:, dim], weights)
    bic = bic_select(data, cfg.k_max, cfg.family, cfg.em, cfg.B, include_uniform=True,
                     restarts=cfg.restarts, seed=seed)
    one_d = WeightedSampleSet(data.values[:, None], data.weights)
    return run_em(one_d, bic.model, cfg.em, ProxConfig(cfg.gamma2)).model


def learn_sparse_mm(samples: WeightedSampleSet, cfg: LearnerConfig = LearnerConfig(),
                    report: ActiveSetReport | None = None) -> LearnResult:
    """Grow a sparse mixture one active dimension at a time.

    Starting from the uniform density, each active dimension (by decreasing
    KS statistic) is tested separately inside every current component.  A
    component whose reweighted samples are not uniform along the dimension is
    split into children: the product of the parent with each term of a
    univariate mixture fitted on that dimension.  The children are then
    refitted jointly with Prox-EM (``gamma1``) while the untouched components
    are held fixed; this joint step only runs for the full-covariance family.
    """
    if report is None:
        report = detect_active_set(samples, cfg.eps_ks, cfg.eps_c)
    d = samples.d
    comps = [MixtureComponent.uniform(1.0)]
    trace: list[dict] = []
    for dim in report.active:
        model = SparseMixtureModel(d, tuple(comps), cfg.B, weight_tol=1e-9)
        beta = np.atleast_2d(posterior_responsibilities(model, samples.points))
        fixed: list[MixtureComponent] = []
        grown: list[MixtureComponent] = []
        extended = []
        for k, comp in enumerate(comps):
            if not residual_active_test(samples, beta[:, k], dim, cfg.eps_ks):
                fixed.append(comp)
                continue
            weights = samples.weights * beta[:, k]
            try:
                uni = fit_conditional_marginal(samples, weights, dim, cfg, [cfg.seed, dim, k])
            except NumericError as exc:
                warnings.warn(f"component {k} not extended along {dim}: {exc}", stacklevel=2)
                fixed.append(comp)
                continue
            children = [_insert_dimension(comp, dim, c, comp.alpha * c.alpha) for c in uni.components]
            grown.extend(children)
            extended.append(k)
        if grown:
            if cfg.family == WRAPPED_FULL:
                model = fixed_group_em(samples, fixed, grown, ProxConfig(cfg.gamma1), cfg.em, d, cfg.B)
                comps = list(model.components)
            else:
                comps = fixed + grown
            comps = merge_components(comps, LEARNER_MERGE_TOL)
        model = SparseMixtureModel.normalized(d, comps, cfg.B)
        comps = list(model.components)
        entry = {
            "dimension": int(dim),
            "extended": extended,
            "n_components": len(comps),
            "loglik": log_likelihood(model, samples),
        }
        trace.append(entry)
        log.info("dimension %d: extended %s, %d components", dim, extended, len(comps))
    final = SparseMixtureModel.normalized(d, comps, cfg.B)
    return LearnResult(final, report, trace)


def index_sets(model: SparseMixtureModel, include_uniform: bool = False) -> set[frozenset[int]]:
    """The coupling structure of ``model`` as a set of index sets."""
    return {frozenset(c.u) for c in model.components if include_uniform or c.family != UNIFORM}
