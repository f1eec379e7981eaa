"""Mixture components, sparse mixture models and their JSON schema."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

WRAPPED_FULL = "wrapped_full"
WRAPPED_DIAG = "wrapped_diag"
VON_MISES = "von_mises"
UNIFORM = "uniform"
FAMILIES = (WRAPPED_FULL, WRAPPED_DIAG, VON_MISES, UNIFORM)


def _ro(a) -> np.ndarray | None:
    if a is None:
        return None
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class MixtureComponent:
    """One summand ``alpha * p(x_u | theta)`` of a sparse mixture.

    ``mean``, ``cov`` and ``kappa`` are indexed in the (sorted) order of ``u``.
    For ``wrapped_full`` ``cov`` is a |u| x |u| SPD matrix, for ``wrapped_diag``
    it is the vector of variances.
    """

    u: tuple[int, ...]
    alpha: float
    family: str
    mean: np.ndarray | None = None
    cov: np.ndarray | None = None
    kappa: np.ndarray | None = None

    def __post_init__(self):
        u = tuple(int(i) for i in self.u)
        if list(u) != sorted(set(u)):
            raise ValueError(f"index set must be sorted and unique, got {self.u}")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "alpha", float(self.alpha))
        if not 0.0 <= self.alpha <= 1.0 + 1e-12:
            raise ValueError(f"alpha={self.alpha} outside [0, 1]")
        fam = self.family
        if fam not in FAMILIES:
            raise ValueError(f"unknown family {fam!r}")
        m = len(u)
        if fam == UNIFORM:
            if m or self.mean is not None or self.cov is not None or self.kappa is not None:
                raise ValueError("uniform component carries no index set or parameters")
            return
        if m == 0:
            raise ValueError(f"{fam} component needs a nonempty index set")
        mean = _ro(self.mean)
        if mean is None or mean.shape != (m,):
            raise ValueError(f"mean must have shape ({m},)")
        object.__setattr__(self, "mean", mean)
        if fam == VON_MISES:
            kappa = _ro(self.kappa)
            if kappa is None or kappa.shape != (m,) or not np.all(kappa > 0):
                raise ValueError("kappa must be a positive vector over u")
            object.__setattr__(self, "kappa", kappa)
            return
        cov = _ro(self.cov)
        if fam == WRAPPED_DIAG:
            if cov is None or cov.shape != (m,) or not np.all(cov > 0):
                raise ValueError("variances must be a positive vector over u")
        else:
            if cov is None or cov.shape != (m, m):
                raise ValueError(f"covariance must be {m} x {m}")
            if not np.allclose(cov, cov.T, rtol=0, atol=1e-12 * max(1.0, np.abs(cov).max())):
                raise ValueError("covariance must be symmetric")
            if np.linalg.eigvalsh(cov).min() <= 0:
                raise ValueError("covariance must be positive definite")
        object.__setattr__(self, "cov", cov)

    @classmethod
    def uniform(cls, alpha: float = 1.0) -> MixtureComponent:
        return cls((), alpha, UNIFORM)

    @property
    def is_uniform(self) -> bool:
        return self.family == UNIFORM

    def with_alpha(self, alpha: float) -> MixtureComponent:
        return replace(self, alpha=alpha)

    def full_cov(self) -> np.ndarray:
        """Covariance as a dense matrix (wrapped families only)."""
        if self.family == WRAPPED_DIAG:
            return np.diag(self.cov)
        if self.family == WRAPPED_FULL:
            return np.array(self.cov)
        raise ValueError(f"{self.family} has no covariance")

    def max_std(self) -> float:
        if self.family == WRAPPED_FULL:
            return float(math.sqrt(np.diag(self.cov).max()))
        if self.family == WRAPPED_DIAG:
            return float(math.sqrt(self.cov.max()))
        return 0.0

    def same_parameters(self, other: MixtureComponent, tol: float) -> bool:
        """Same index set, family and parameters within absolute ``tol``."""
        if self.u != other.u or self.family != other.family:
            return False
        for a, b in ((self.mean, other.mean), (self.cov, other.cov), (self.kappa, other.kappa)):
            if (a is None) != (b is None):
                return False
            if a is not None and np.max(np.abs(a - b)) > tol:
                return False
        return True

    def to_dict(self) -> dict:
        out = {"u": list(self.u), "alpha": self.alpha, "family": self.family}
        if self.family == UNIFORM:
            return out
        out["mean"] = self.mean.tolist()
        if self.family == WRAPPED_FULL:
            out["cov"] = self.cov.tolist()
        elif self.family == WRAPPED_DIAG:
            out["var"] = self.cov.tolist()
        else:
            out["kappa"] = self.kappa.tolist()
        return out

    @classmethod
    def from_dict(cls, d: dict) -> MixtureComponent:
        fam = d["family"]
        cov = d.get("cov") if fam == WRAPPED_FULL else d.get("var")
        return cls(tuple(d["u"]), d["alpha"], fam, d.get("mean"), cov, d.get("kappa"))


def truncation_bound(max_std: float) -> int:
    """Lattice half-width B = max(1, ceil(3 * sigma_max))."""
    return max(1, int(math.ceil(3.0 * max_std)))


@dataclass(frozen=True, eq=False)
class SparseMixtureModel:
    d: int
    components: tuple[MixtureComponent, ...]
    truncation_B: int = 1
    weight_tol: float = field(default=1e-12, repr=False)

    def __post_init__(self):
        comps = tuple(self.components)
        object.__setattr__(self, "components", comps)
        if not comps:
            raise ValueError("a mixture needs at least one component")
        if self.truncation_B < 0:
            raise ValueError("truncation bound must be non-negative")
        total = math.fsum(c.alpha for c in comps)
        if abs(total - 1.0) > self.weight_tol:
            raise ValueError(f"mixing weights sum to {total!r}, not 1")
        if sum(c.is_uniform for c in comps) > 1:
            raise ValueError("at most one uniform component")
        for c in comps:
            if c.u and (c.u[0] < 0 or c.u[-1] >= self.d):
                raise ValueError(f"index set {c.u} outside dimension {self.d}")

    @classmethod
    def normalized(cls, d: int, components, truncation_B: int = 1) -> SparseMixtureModel:
        """Build a model after rescaling the weights to sum exactly to one."""
        comps = list(components)
        total = math.fsum(c.alpha for c in comps)
        comps = [c.with_alpha(c.alpha / total) for c in comps]
        return cls(d, tuple(comps), truncation_B, weight_tol=1e-9)

    @classmethod
    def uniform(cls, d: int, truncation_B: int = 1) -> SparseMixtureModel:
        return cls(d, (MixtureComponent.uniform(1.0),), truncation_B)

    @property
    def alphas(self) -> np.ndarray:
        return np.array([c.alpha for c in self.components])

    @property
    def index_sets(self) -> list[tuple[int, ...]]:
        return [c.u for c in self.components]

    @property
    def n_components(self) -> int:
        return len(self.components)

    def structure(self) -> set[tuple[int, ...]]:
        """Coupling sets of the non-uniform components."""
        return {c.u for c in self.components if not c.is_uniform}

    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "B": self.truncation_B,
            "components": [c.to_dict() for c in self.components],
        }

    @classmethod
    def from_dict(cls, data: dict) -> SparseMixtureModel:
        comps = tuple(MixtureComponent.from_dict(c) for c in data["components"])
        return cls(int(data["d"]), comps, int(data.get("B", 1)), weight_tol=1e-9)

    def to_json(self, indent: int | None = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent)

    @classmethod
    def from_json(cls, text: str) -> SparseMixtureModel:
        return cls.from_dict(json.loads(text))

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_json())
            fh.write("\n")

    @classmethod
    def load(cls, path) -> SparseMixtureModel:
        with open(path) as fh:
            return cls.from_json(fh.read())
