"""Mean-field variational inference with the reparameterization trick.

Maximizes ELBO(q) = E_q[log p(D | w)] - KL(q || p(w)) over a fully factorized
Gaussian q, using w = mu + sigma * z draws for the data term and the closed
form for the Gaussian-Gaussian KL. Optimization is Adam on (mu, log sigma).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from ..errors import ConfigError, NumericalError
from ..network import LikelihoodSpec, NetworkSpec, ParamVector, backprop, data_nll_grad, forward_cached, strip_power
from ..priors import PriorSpec, scale_vector
from .posterior import FactorizedGaussian
from .training import TrainConfig, lr_multiplier

Array = np.ndarray


def _kl_and_grads(mu: Array, rho: Array, prior_std: Array):
    """KL(N(mu, e^{2 rho}) || N(0, prior_std^2)) and its (d mu, d rho) gradients."""
    var = np.exp(2.0 * rho)
    p2 = prior_std**2
    kl = float(
        np.sum(np.log(prior_std) - rho + (var + mu**2) / (2.0 * p2) - 0.5)
    )
    return kl, mu / p2, var / p2 - 1.0


class _Adam:
    def __init__(self, size: int, beta1=0.9, beta2=0.999, eps=1e-8):
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0

    def step(self, grad: Array, lr: float) -> Array:
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        m_hat = self.m / (1 - self.beta1**self.t)
        v_hat = self.v / (1 - self.beta2**self.t)
        return lr * m_hat / (np.sqrt(v_hat) + self.eps)


@dataclass
class SviFit:
    posterior: FactorizedGaussian
    elbo_trace: Array  # one full-data estimate per epoch


def elbo_estimate(
    spec: NetworkSpec,
    q: FactorizedGaussian,
    data,
    likelihood: LikelihoodSpec,
    prior: PriorSpec,
    n_draws: int,
    seed,
) -> float:
    """Monte Carlo ELBO of a fitted q on the full dataset."""
    rng = np.random.default_rng(seed)
    mu = q.mean.values
    std = np.exp(q.log_std)
    prior_std = scale_vector(prior, spec)
    kl, _, _ = _kl_and_grads(mu, q.log_std, prior_std)
    x = np.asarray(data.inputs, dtype=np.float64)
    y = np.asarray(data.targets)
    total = 0.0
    for _ in range(n_draws):
        w = mu + std * rng.standard_normal(mu.size)
        outputs, _ = forward_cached(spec, w, x)
        nll, _ = data_nll_grad(likelihood, outputs, y)
        total += -nll
    return total / n_draws - kl


def fit_svi(
    spec: NetworkSpec,
    data,
    likelihood: LikelihoodSpec,
    prior: PriorSpec,
    config: TrainConfig,
    init: ParamVector,
    mc_samples: int = 1,
    init_log_std: Union[float, Array] = np.log(1e-2),
    average_last: float = 0.1,
    antithetic: bool = True,
) -> SviFit:
    """Fit the factorized Gaussian; the returned mean averages the final
    ``average_last`` fraction of iterates to damp gradient noise.

    With ``antithetic`` the reparameterization draws come in (z, -z) pairs,
    which cancels the leading odd-order gradient noise at no extra cost.
    """
    base, power = strip_power(likelihood)
    if mc_samples < 1:
        raise ConfigError("mc_samples must be >= 1")
    prior_std = scale_vector(prior, spec)
    if np.any(prior_std <= 0):
        raise ConfigError("SVI requires strictly positive prior scales")
    if init.spec != spec:
        raise ConfigError("init does not match the network spec")
    mu = init.values.copy()
    rho = np.broadcast_to(np.asarray(init_log_std, dtype=np.float64), mu.shape).copy()
    rng = np.random.default_rng(config.seed)
    x = np.asarray(data.inputs, dtype=np.float64)
    y = np.asarray(data.targets)
    n = len(x)
    batch = min(config.batch_size, n)
    adam_mu = _Adam(mu.size)
    adam_rho = _Adam(rho.size)
    scale_power = power / config.temperature.t
    trace = []
    tail_from = int(np.ceil(config.epochs * (1.0 - average_last)))
    tail_mu = np.zeros_like(mu)
    tail_rho = np.zeros_like(rho)
    tail_n = 0
    for epoch in range(config.epochs):
        lr = config.learning_rate * lr_multiplier(config, epoch)
        order = rng.permutation(n)
        epoch_elbo = 0.0
        n_batches = 0
        for start in range(0, n, batch):
            idx = order[start : start + batch]
            data_scale = scale_power * (n / len(idx))
            sigma = np.exp(rho)
            g_mu = np.zeros_like(mu)
            g_rho = np.zeros_like(rho)
            nll_mean = 0.0
            half = rng.standard_normal((max(1, (mc_samples + 1) // 2), mu.size))
            if antithetic:
                zs = np.concatenate([half, -half])[:mc_samples]
            else:
                zs = rng.standard_normal((mc_samples, mu.size))
            for z in zs:
                w = mu + sigma * z
                outputs, cache = forward_cached(spec, w, x[idx])
                nll, out_grad = data_nll_grad(base, outputs, y[idx])
                g = backprop(spec, w, cache, out_grad)
                g_mu += g
                g_rho += g * sigma * z
                nll_mean += nll
            g_mu *= data_scale / mc_samples
            g_rho *= data_scale / mc_samples
            nll_mean *= data_scale / mc_samples
            kl, kl_mu, kl_rho = _kl_and_grads(mu, rho, prior_std)
            elbo = -nll_mean - kl
            if not np.isfinite(elbo):
                raise NumericalError("ELBO diverged")
            mu = mu - adam_mu.step(g_mu + kl_mu, lr)
            rho = rho - adam_rho.step(g_rho + kl_rho, lr)
            epoch_elbo += elbo
            n_batches += 1
        trace.append(epoch_elbo / n_batches)
        if epoch >= tail_from:
            tail_mu += mu
            tail_rho += rho
            tail_n += 1
    if tail_n > 0:
        mu = tail_mu / tail_n
        rho = tail_rho / tail_n
    q = FactorizedGaussian(ParamVector(mu, spec), rho)
    return SviFit(q, np.array(trace))
