"""Tempered negative-log-posterior objectives.

The training/sampling target is

    L(w) = (1/T) * (-log p(batch | w)) + (-log p(w)),

the normalizer Z(T) being constant in w. The data term can additionally be
rescaled (n / batch_size) so minibatch gradients are unbiased estimates of the
full-data gradient.
"""
from __future__ import annotations

from typing import Callable, Optional, Tuple

import numpy as np

from .errors import ConfigError, NumericalError
from .network import (
    LikelihoodSpec,
    NetworkSpec,
    ParamVector,
    Temperature,
    backprop,
    data_nll,
    data_nll_grad,
    forward_cached,
    forward_values,
    strip_power,
)
from .priors import PriorSpec, neg_log_prior_and_grad, scale_vector

Array = np.ndarray


def _effective_scale(likelihood: LikelihoodSpec, temp: Temperature, data_scale: float):
    base, power = strip_power(likelihood)
    return base, power * (1.0 / temp.t) * data_scale


def loss_only(
    spec: NetworkSpec,
    values: Array,
    inputs: Optional[Array],
    targets: Optional[Array],
    likelihood: LikelihoodSpec,
    prior: PriorSpec,
    temp: Temperature = Temperature(),
    data_scale: float = 1.0,
) -> float:
    scales = scale_vector(prior, spec)
    neg_prior, _ = neg_log_prior_and_grad(values, scales)
    if inputs is None:
        return neg_prior
    base, scale = _effective_scale(likelihood, temp, data_scale)
    nll = data_nll(base, forward_values(spec, values, inputs), targets)
    return scale * nll + neg_prior


def loss_and_grad(
    spec: NetworkSpec,
    params: ParamVector,
    inputs: Array,
    targets: Array,
    likelihood: LikelihoodSpec,
    prior: PriorSpec,
    temp: Temperature = Temperature(),
) -> Tuple[float, ParamVector]:
    """Tempered negative log posterior of a batch and its exact gradient."""
    if params.spec != spec:
        raise ConfigError("parameter vector was built for a different spec")
    inputs = np.asarray(inputs, dtype=np.float64)
    if inputs.ndim == 1:
        inputs = inputs[None, :]
    if len(inputs) == 0:
        raise ConfigError("batch must be nonempty")
    fn = make_objective(spec, inputs, targets, likelihood, prior, temp)
    loss, grad = fn(params.values)
    return loss, ParamVector(grad, spec)


def make_objective(
    spec: NetworkSpec,
    inputs: Optional[Array],
    targets: Optional[Array],
    likelihood: Optional[LikelihoodSpec],
    prior: PriorSpec,
    temp: Temperature = Temperature(),
    data_scale: float = 1.0,
) -> Callable[[Array], Tuple[float, Array]]:
    """Closure computing (loss, gradient) on raw flat vectors.

    ``inputs=None`` drops the data term entirely (prior-only target); this is
    what the samplers use for analytic sanity checks.
    """
    scales = scale_vector(prior, spec)
    if inputs is None:
        def prior_objective(values: Array):
            neg_prior, grad = neg_log_prior_and_grad(values, scales)
            if not np.isfinite(neg_prior):
                raise NumericalError("non-finite prior term")
            return neg_prior, grad

        return prior_objective

    x = np.asarray(inputs, dtype=np.float64)
    base, scale = _effective_scale(likelihood, temp, data_scale)

    def objective(values: Array):
        outputs, cache = forward_cached(spec, values, x)
        nll, out_grad = data_nll_grad(base, outputs, targets)
        neg_prior, prior_grad = neg_log_prior_and_grad(values, scales)
        loss = scale * nll + neg_prior
        if not np.isfinite(loss):
            raise NumericalError(f"non-finite loss {loss!r}")
        grad = scale * backprop(spec, values, cache, out_grad) + prior_grad
        return loss, grad

    return objective
