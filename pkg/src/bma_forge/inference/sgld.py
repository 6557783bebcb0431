"""Stochastic gradient Langevin dynamics with per-sample restarts.

Each posterior sample is the final iterate of an independent run whose step
size follows a cosine schedule down to zero:

    w <- w - (eta / 2) * grad U(w) + sqrt(eta) * xi,   xi ~ N(0, I),

with U the tempered negative log posterior (minibatch gradients are rescaled
by n / batch).
"""
from __future__ import annotations

from typing import Optional

import numpy as np

from ..errors import ConfigError, NumericalError
from ..network import LikelihoodSpec, NetworkSpec, ParamVector
from ..objective import make_objective
from ..parallel import ordered_map
from ..priors import PriorSpec
from .posterior import DiracEnsemble
from .training import TrainConfig, he_init

Array = np.ndarray


def _run_restart(args):
    spec, inputs, targets, likelihood, prior, config, init, seed = args
    rng = np.random.default_rng(seed)
    w = (init if init is not None else he_init(spec, seed).values).copy()
    if inputs is None:
        n = 1
        batch = 1
        steps_per_epoch = 1
    else:
        n = len(inputs)
        batch = min(config.batch_size, n)
        steps_per_epoch = (n + batch - 1) // batch
    total_steps = config.epochs * steps_per_epoch
    step = 0
    for _ in range(config.epochs):
        order = rng.permutation(n) if inputs is not None else None
        for start in range(0, n, batch):
            eta = config.learning_rate * 0.5 * (1.0 + np.cos(np.pi * step / total_steps))
            if inputs is None:
                fn = make_objective(spec, None, None, None, prior, config.temperature)
            else:
                idx = order[start : start + batch]
                fn = make_objective(
                    spec, inputs[idx], targets[idx], likelihood, prior,
                    config.temperature, data_scale=n / len(idx),
                )
            _, grad = fn(w)
            noise = rng.standard_normal(w.size)
            w = w - 0.5 * eta * grad + np.sqrt(eta) * noise
            step += 1
        if not np.all(np.isfinite(w)):
            raise NumericalError("SGLD diverged")
    return w


def run_sgld(
    spec: NetworkSpec,
    data,
    likelihood: Optional[LikelihoodSpec],
    prior: PriorSpec,
    config: TrainConfig,
    n_samples: int,
    seed: int = 0,
    init: Optional[ParamVector] = None,
) -> DiracEnsemble:
    """Posterior samples from ``n_samples`` independent cosine-schedule runs,
    keeping only each run's last iterate. ``data=None`` targets the prior."""
    if config.schedule != "cosine":
        raise ConfigError("run_sgld requires the cosine schedule")
    if n_samples < 1:
        raise ConfigError("n_samples must be >= 1")
    if data is None:
        inputs, targets = None, None
    else:
        inputs = np.asarray(data.inputs, dtype=np.float64)
        targets = np.asarray(data.targets)
    init_values = init.values if init is not None else None
    jobs = [
        (spec, inputs, targets, likelihood, prior, config, init_values, seed + r)
        for r in range(n_samples)
    ]
    finals = ordered_map(_run_restart, jobs)
    return DiracEnsemble([ParamVector(w, spec) for w in finals])
