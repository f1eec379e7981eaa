"""Block-matrix algebra, marginals and conditionals of sparse mixtures."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NumericError
from .model import VON_MISES, WRAPPED_DIAG, WRAPPED_FULL, MixtureComponent, SparseMixtureModel

MERGE_TOL = 1e-9


@dataclass(frozen=True)
class BlockInverse:
    """Inverse of a covariance partitioned into (u, u^c) blocks.

    ``A, B, C, D`` are the blocks of the inverse in the order
    ``[[uu, uu^c], [u^cu, u^cu^c]]``; ``det_u`` and ``det_schur`` factor the
    determinant as ``det(S_uu) * det(S_u^cu^c - S_u^cu S_uu^-1 S_uu^c)``.
    """

    u: tuple[int, ...]
    uc: tuple[int, ...]
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    schur: np.ndarray
    det_u: float
    det_schur: float

    @property
    def det(self) -> float:
        return self.det_u * self.det_schur

    def assemble(self) -> np.ndarray:
        """Inverse in the original index order."""
        n = len(self.u) + len(self.uc)
        out = np.empty((n, n))
        u, uc = list(self.u), list(self.uc)
        out[np.ix_(u, u)] = self.A
        out[np.ix_(u, uc)] = self.B
        out[np.ix_(uc, u)] = self.C
        out[np.ix_(uc, uc)] = self.D
        return out


def _split(n: int, u) -> tuple[list[int], list[int]]:
    u = sorted(set(int(i) for i in u))
    if not u or len(u) >= n or u[0] < 0 or u[-1] >= n:
        raise ValueError(f"{u} is not a proper nonempty subset of range({n})")
    uc = [i for i in range(n) if i not in u]
    return u, uc


def block_inverse(cov, u) -> BlockInverse:
    """Invert ``cov`` through the Schur complement of its ``u`` block."""
    cov = np.asarray(cov, dtype=float)
    u, uc = _split(cov.shape[0], u)
    S_uu = cov[np.ix_(u, u)]
    S_uc = cov[np.ix_(u, uc)]
    S_cu = cov[np.ix_(uc, u)]
    S_cc = cov[np.ix_(uc, uc)]
    try:
        A_inv = np.linalg.inv(S_uu)
        cond = np.linalg.cond(S_uu)
    except np.linalg.LinAlgError:
        raise NumericError(f"leading block over {u} is singular") from None
    if not np.isfinite(cond) or cond > 1e14:
        raise NumericError(f"leading block over {u} is singular (condition number {cond:.3g})")
    schur = S_cc - S_cu @ A_inv @ S_uc
    try:
        schur_inv = np.linalg.inv(schur)
    except np.linalg.LinAlgError:
        raise NumericError("Schur complement is singular") from None
    B = -A_inv @ S_uc @ schur_inv
    C = -schur_inv @ S_cu @ A_inv
    A = A_inv + A_inv @ S_uc @ schur_inv @ S_cu @ A_inv
    return BlockInverse(
        tuple(u), tuple(uc), A, B, C, schur_inv, schur,
        float(np.linalg.det(S_uu)), float(np.linalg.det(schur)),
    )


def marginal_component(comp: MixtureComponent, v) -> MixtureComponent:
    """Restrict a component to the coordinates in ``v``.

    Wrapped Gaussians and von Mises products stay in family with parameters
    restricted to ``u ∩ v``; an empty intersection gives the uniform density.
    """
    v = set(int(i) for i in v)
    if comp.is_uniform:
        return comp
    xi = tuple(i for i in comp.u if i in v)
    if xi == comp.u:
        return comp
    if not xi:
        return MixtureComponent.uniform(comp.alpha)
    pos = [comp.u.index(i) for i in xi]
    mean = comp.mean[pos]
    if comp.family == WRAPPED_FULL:
        return MixtureComponent(xi, comp.alpha, WRAPPED_FULL, mean, comp.cov[np.ix_(pos, pos)])
    if comp.family == WRAPPED_DIAG:
        return MixtureComponent(xi, comp.alpha, WRAPPED_DIAG, mean, comp.cov[pos])
    return MixtureComponent(xi, comp.alpha, VON_MISES, mean, kappa=comp.kappa[pos])


def merge_components(components, tol: float) -> list[MixtureComponent]:
    """Merge components with equal index set, family and parameters (within ``tol``)."""
    merged: list[MixtureComponent] = []
    for c in components:
        for j, m in enumerate(merged):
            if m.same_parameters(c, tol):
                merged[j] = m.with_alpha(m.alpha + c.alpha)
                break
        else:
            merged.append(c)
    return merged


def marginalize_model(model: SparseMixtureModel, v, merge_tol: float = MERGE_TOL) -> SparseMixtureModel:
    """Marginal of the mixture on the coordinates ``v``, re-indexed to ``0..|v|-1``.

    Components whose restrictions coincide are merged by summing weights.
    """
    v = sorted(set(int(i) for i in v))
    if any(i < 0 or i >= model.d for i in v):
        raise ValueError(f"{v} is not a subset of range({model.d})")
    pos = {i: k for k, i in enumerate(v)}
    restricted = []
    for c in model.components:
        m = marginal_component(c, v)
        if not m.is_uniform:
            m = MixtureComponent(tuple(pos[i] for i in m.u), m.alpha, m.family, m.mean, m.cov, m.kappa)
        restricted.append(m)
    merged = merge_components(restricted, merge_tol)
    return SparseMixtureModel.normalized(len(v), merged, model.truncation_B)


@dataclass(frozen=True)
class ConditionalParams:
    mean_bar: np.ndarray
    cov_bar: np.ndarray


def conditional_params(comp: MixtureComponent, u, x_u, l_u=None) -> ConditionalParams:
    """Parameters of X_{u^c} | (X_u, L_u) = (x_u, l_u) for a full wrapped Gaussian.

    ``u`` is given in ambient coordinates and must be a proper subset of
    ``comp.u``; the result is indexed by the remaining coordinates of
    ``comp.u`` in sorted order.
    """
    if comp.family not in (WRAPPED_FULL, WRAPPED_DIAG):
        raise ValueError("conditioning is defined for wrapped Gaussian components")
    u = sorted(set(int(i) for i in u))
    if not set(u) < set(comp.u) or not u:
        raise ValueError(f"{u} must be a proper nonempty subset of {comp.u}")
    pos = [comp.u.index(i) for i in u]
    blocks = block_inverse(comp.full_cov(), pos)
    rest = list(blocks.uc)
    cov = comp.full_cov()
    x_u = np.atleast_1d(np.asarray(x_u, dtype=float))
    l_u = np.zeros(len(u)) if l_u is None else np.atleast_1d(np.asarray(l_u, dtype=float))
    innovation = x_u + l_u - comp.mean[pos]
    gain = cov[np.ix_(rest, pos)] @ np.linalg.inv(cov[np.ix_(pos, pos)])
    mean_bar = comp.mean[rest] + gain @ innovation
    cov_bar = blocks.schur
    return ConditionalParams(mean_bar, 0.5 * (cov_bar + cov_bar.T))


def gaussian_logpdf(y, mean, cov) -> float:
    """Plain (unwrapped) multivariate normal log density at a single point."""
    y = np.atleast_1d(np.asarray(y, dtype=float)) - np.atleast_1d(mean)
    cov = np.atleast_2d(cov)
    L = np.linalg.cholesky(cov)
    z = np.linalg.solve(L, y)
    return float(-0.5 * z @ z - np.log(np.diag(L)).sum() - 0.5 * y.size * math.log(2 * math.pi))


def split_gaussian_logpdf(y, mean, cov, u) -> tuple[float, float]:
    """Factor log N(y | mean, cov) into marginal over ``u`` plus conditional over ``u^c``."""
    mean = np.asarray(mean, dtype=float)
    cov = np.asarray(cov, dtype=float)
    y = np.asarray(y, dtype=float)
    u, uc = _split(cov.shape[0], u)
    comp = MixtureComponent(tuple(range(cov.shape[0])), 1.0, WRAPPED_FULL, np.zeros_like(mean), cov)
    cp = conditional_params(comp, u, y[u] - mean[u])
    marg = gaussian_logpdf(y[u], mean[u], cov[np.ix_(u, u)])
    cond = gaussian_logpdf(y[uc], mean[uc] + cp.mean_bar, cp.cov_bar)
    return marg, cond

