"""Sparse mixtures of wrapped Gaussian and von Mises densities on the unit torus."""

from .densities import (
    log_likelihood,
    mixture_pdf,
    posterior_responsibilities,
    von_mises_pdf,
    wrapped_normal_pdf,
    wrapped_normal_pdf_diag,
)
from .em import EmConfig, ProxConfig, bic_select, em_fit, fixed_group_em, prox_em_fit, prox_l0_simplex
from .errors import DomainError, NumericError, ZeroDensityError
from .learner import ActiveSetReport, LearnerConfig, detect_active_set, learn_sparse_mm
from .marginals import block_inverse, conditional_params, marginal_component, marginalize_model
from .model import MixtureComponent, SparseMixtureModel
from .samples import UnivariateWeightedSamples, WeightedSampleSet
from .synth import make_test_function, mc_norm, rejection_sample, relative_lp_error

__version__ = "0.1.0"

__all__ = [
    "ActiveSetReport",
    "DomainError",
    "EmConfig",
    "LearnerConfig",
    "MixtureComponent",
    "NumericError",
    "ProxConfig",
    "SparseMixtureModel",
    "UnivariateWeightedSamples",
    "WeightedSampleSet",
    "ZeroDensityError",
    "bic_select",
    "block_inverse",
    "conditional_params",
    "detect_active_set",
    "em_fit",
    "fixed_group_em",
    "learn_sparse_mm",
    "log_likelihood",
    "make_test_function",
    "marginal_component",
    "marginalize_model",
    "mc_norm",
    "mixture_pdf",
    "posterior_responsibilities",
    "prox_em_fit",
    "prox_l0_simplex",
    "rejection_sample",
    "relative_lp_error",
    "von_mises_pdf",
    "wrapped_normal_pdf",
    "wrapped_normal_pdf_diag",
]
