"""Posterior approximators: point estimates, SWAG, ensembles, SVI, HMC, SGLD,
and the diagonal Laplace evidence."""

from .ensembles import MultiSwagResult, deep_ensemble, multi_swa, multi_swag
from .hmc import ChainResult, HmcResult, hmc_chain, leapfrog, run_hmc
from .laplace import fisher_diagonal, laplace_log_marginal
from .posterior import (
    DiracEnsemble,
    FactorizedGaussian,
    Mixture,
    PosteriorApprox,
    SwagGaussian,
    draw_swag,
    load_posterior,
    posterior_draws,
    posterior_tag,
    sample_swag,
    save_posterior,
)
from .sgld import run_sgld
from .svi import SviFit, elbo_estimate, fit_svi
from .training import (
    SgdRun,
    SwagCollector,
    TrainConfig,
    fit_swag,
    he_init,
    lr_multiplier,
    run_sgd,
    train_map,
    train_swa,
    with_seed,
)

__all__ = [
    "ChainResult",
    "DiracEnsemble",
    "FactorizedGaussian",
    "HmcResult",
    "Mixture",
    "MultiSwagResult",
    "PosteriorApprox",
    "SgdRun",
    "SviFit",
    "SwagCollector",
    "SwagGaussian",
    "TrainConfig",
    "deep_ensemble",
    "draw_swag",
    "elbo_estimate",
    "fisher_diagonal",
    "fit_svi",
    "fit_swag",
    "he_init",
    "hmc_chain",
    "laplace_log_marginal",
    "leapfrog",
    "load_posterior",
    "lr_multiplier",
    "multi_swa",
    "multi_swag",
    "posterior_draws",
    "posterior_tag",
    "run_hmc",
    "run_sgd",
    "run_sgld",
    "sample_swag",
    "save_posterior",
    "train_map",
    "train_swa",
    "with_seed",
]
