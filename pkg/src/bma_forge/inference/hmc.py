"""Hamiltonian Monte Carlo with a unit mass matrix and leapfrog integration.

The target is the tempered negative log posterior U(w); momenta are standard
normal, H(w, p) = U(w) + |p|^2 / 2. Step sizes can be tuned during burn-in by
dual averaging toward a target acceptance rate.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from ..errors import ConfigError, NumericalError, StepSizeError
from ..network import LikelihoodSpec, NetworkSpec, ParamVector, Temperature
from ..objective import make_objective
from ..parallel import ordered_map
from ..priors import PriorSpec
from .posterior import DiracEnsemble
from .training import TrainConfig, train_map, with_seed

Array = np.ndarray
Objective = Callable[[Array], Tuple[float, Array]]


def leapfrog(grad: Callable[[Array], Array], w: Array, p: Array, step: float, n_steps: int):
    """Symplectic leapfrog: n_steps full steps of size ``step``."""
    p = p - 0.5 * step * grad(w)
    for i in range(n_steps):
        w = w + step * p
        g = grad(w)
        p = p - (step if i < n_steps - 1 else 0.5 * step) * g
    return w, p


@dataclass
class ChainResult:
    samples: Array  # (n_samples, d)
    accept_rate: float
    step_size: float
    burn_in_accept_rate: float


class _DualAveraging:
    """Nesterov dual averaging of log step size (the NUTS warmup rule)."""

    def __init__(self, step0: float, target: float, gamma=0.05, t0=10.0, kappa=0.75):
        self.mu = np.log(10.0 * step0)
        self.target = target
        self.gamma, self.t0, self.kappa = gamma, t0, kappa
        self.h_bar = 0.0
        self.log_eps_bar = np.log(step0)
        self.m = 0

    def update(self, accept_prob: float) -> float:
        self.m += 1
        eta = 1.0 / (self.m + self.t0)
        self.h_bar = (1.0 - eta) * self.h_bar + eta * (self.target - accept_prob)
        log_eps = self.mu - np.sqrt(self.m) / self.gamma * self.h_bar
        w = self.m**-self.kappa
        self.log_eps_bar = w * log_eps + (1.0 - w) * self.log_eps_bar
        return float(np.exp(log_eps))

    @property
    def adapted(self) -> float:
        return float(np.exp(self.log_eps_bar))


def hmc_chain(
    objective: Objective,
    init: Array,
    n_samples: int,
    burn_in: int,
    step_size: float,
    n_leapfrog: int,
    rng,
    adapt_step_size: bool = True,
    target_accept: float = 0.7,
    jitter: bool = True,
    thin: int = 1,
) -> ChainResult:
    """One chain; keeps every ``thin``-th post-burn-in iterate.

    ``jitter`` randomizes the step size (x U[0.8, 1.2]) and the number of
    leapfrog steps (U{ceil(L/2) .. L}) per trajectory, which breaks the
    periodicity an unlucky fixed trajectory length can hit on near-Gaussian
    targets.
    """
    if n_leapfrog < 1:
        raise ConfigError("leapfrog_steps must be >= 1")
    if not step_size > 0:
        raise ConfigError("step_size must be > 0")
    if thin < 1:
        raise ConfigError("thin must be >= 1")

    def grad(w: Array) -> Array:
        return objective(w)[1]

    w = np.array(init, dtype=np.float64)
    u = objective(w)[0]
    eps = step_size
    tuner = _DualAveraging(step_size, target_accept) if adapt_step_size else None
    samples = np.empty((n_samples, w.size))
    accepted_main = 0
    accepted_burn = 0
    main_total = 0
    kept = 0
    it = 0
    while kept < n_samples:
        p = rng.standard_normal(w.size)
        h0 = u + 0.5 * float(p @ p)
        if jitter:
            eps_t = eps * rng.uniform(0.8, 1.2)
            steps_t = int(rng.integers((n_leapfrog + 1) // 2, n_leapfrog + 1))
        else:
            eps_t, steps_t = eps, n_leapfrog
        try:
            w_new, p_new = leapfrog(grad, w, p, eps_t, steps_t)
            u_new = objective(w_new)[0]
            h1 = u_new + 0.5 * float(p_new @ p_new)
            log_accept = h0 - h1
        except (FloatingPointError, NumericalError):
            log_accept = -np.inf
        if not np.isfinite(log_accept):
            log_accept = -np.inf
        accept_prob = float(np.exp(min(log_accept, 0.0)))
        if np.log(rng.uniform()) < log_accept:
            w, u = w_new, u_new
            if it < burn_in:
                accepted_burn += 1
            else:
                accepted_main += 1
        if it < burn_in:
            if tuner is not None:
                eps = tuner.update(accept_prob)
            if it == burn_in - 1:
                if tuner is not None:
                    eps = tuner.adapted
                if burn_in >= 50 and accepted_burn < 0.01 * burn_in:
                    raise StepSizeError(
                        f"burn-in acceptance {accepted_burn / burn_in:.4f} below 1%"
                    )
        else:
            main_total += 1
            if (main_total - 1) % thin == 0:
                samples[kept] = w
                kept += 1
        it += 1
    return ChainResult(
        samples,
        accepted_main / max(main_total, 1),
        eps,
        accepted_burn / max(burn_in, 1),
    )


@dataclass
class HmcResult:
    samples: DiracEnsemble  # chain-major order
    acceptance_rates: Array  # per chain, post burn-in
    step_sizes: Array  # per chain, after any adaptation
    n_chains: int


def _run_chain(args):
    # the objective closure is rebuilt here so chains can cross process
    # boundaries under BMA_FORGE_WORKERS
    (spec, inputs, targets, likelihood, prior, temp, init,
     n_samples, burn_in, step, n_leap, seed, adapt, target, jitter, thin) = args
    objective = make_objective(spec, inputs, targets, likelihood, prior, temp)
    rng = np.random.default_rng(seed)
    return hmc_chain(objective, init, n_samples, burn_in, step, n_leap, rng,
                     adapt_step_size=adapt, target_accept=target,
                     jitter=jitter, thin=thin)


def run_hmc(
    spec: NetworkSpec,
    data,
    likelihood: Optional[LikelihoodSpec],
    prior: PriorSpec,
    n_chains: int,
    burn_in: int,
    n_samples: int,
    step_size: float = 1e-3,
    leapfrog_steps: int = 50,
    init_per_chain: Optional[Sequence[ParamVector]] = None,
    seed: int = 0,
    temperature: Temperature = Temperature(),
    pretrain: Optional[TrainConfig] = None,
    adapt_step_size: bool = True,
    target_accept: float = 0.7,
    jitter: bool = True,
    thin: int = 1,
) -> HmcResult:
    """HMC over the tempered posterior; ``data=None`` targets the prior alone.

    Chains are seeded ``seed + chain`` and initialized, in order of
    preference, from ``init_per_chain``, an SGD pretraining run per chain
    (``pretrain``), or He-initialized random draws.
    """
    if n_chains < 1:
        raise ConfigError("n_chains must be >= 1")
    if data is None:
        inputs, targets = None, None
    else:
        inputs = np.asarray(data.inputs, dtype=np.float64)
        targets = np.asarray(data.targets)

    inits: List[Array] = []
    if init_per_chain is not None:
        if len(init_per_chain) != n_chains:
            raise ConfigError("need one init per chain")
        inits = [p.values for p in init_per_chain]
    elif pretrain is not None and data is not None:
        for c in range(n_chains):
            inits.append(
                train_map(spec, data, likelihood, prior, with_seed(pretrain, pretrain.seed + c)).values
            )
    else:
        from .training import he_init

        inits = [he_init(spec, seed + c).values for c in range(n_chains)]

    jobs = [
        (spec, inputs, targets, likelihood, prior, temperature, inits[c],
         n_samples, burn_in, step_size, leapfrog_steps,
         seed + c, adapt_step_size, target_accept, jitter, thin)
        for c in range(n_chains)
    ]
    chains = ordered_map(_run_chain, jobs)
    members = [
        ParamVector(row, spec) for chain in chains for row in chain.samples
    ]
    return HmcResult(
        DiracEnsemble(members),
        np.array([c.accept_rate for c in chains]),
        np.array([c.step_size for c in chains]),
        n_chains,
    )
