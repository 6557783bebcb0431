"""bma-forge: a desk-scale Bayesian deep-learning laboratory.

Multi-basin marginalization (deep ensembles, SWAG, MultiSWA, MultiSWAG),
variational inference, HMC and SGLD samplers, tempered posteriors,
neural-network prior diagnostics, a Gaussian-process counterpart, and a
reproducible experiment harness.
"""

from . import data, gp, inference, metrics, priors
from .errors import (
    BmaForgeError,
    ConfigError,
    DataFormatError,
    DegenerateCorrelationError,
    JitterError,
    NumericalError,
    StepSizeError,
)
from .network import (
    Categorical,
    GaussianRegression,
    LikelihoodSpec,
    NetworkSpec,
    ParamVector,
    TemperedLikelihood,
    Temperature,
    count_params,
    forward,
)
from .objective import loss_and_grad, make_objective
from .priors import PriorSpec, log_prior_density, sample_params

__version__ = "0.1.0"

__all__ = [
    "BmaForgeError",
    "Categorical",
    "ConfigError",
    "DataFormatError",
    "DegenerateCorrelationError",
    "GaussianRegression",
    "JitterError",
    "LikelihoodSpec",
    "NetworkSpec",
    "NumericalError",
    "ParamVector",
    "PriorSpec",
    "StepSizeError",
    "TemperedLikelihood",
    "Temperature",
    "count_params",
    "data",
    "forward",
    "gp",
    "inference",
    "loss_and_grad",
    "log_prior_density",
    "make_objective",
    "metrics",
    "priors",
    "sample_params",
]
