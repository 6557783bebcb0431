"""SGD training of the tempered negative log posterior, with SWA / SWAG collection.

The schedule shapes follow the stochastic-weight-averaging recipe: a constant
phase, a linear decay, then a constant tail at ``decay_floor`` times the
initial rate, during which iterates are collected.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional

import numpy as np

from ..errors import ConfigError, NumericalError
from ..network import LikelihoodSpec, NetworkSpec, ParamVector, Temperature, count_params, layer_slots
from ..objective import loss_only, make_objective
from ..priors import PriorSpec
from .posterior import SwagGaussian

Array = np.ndarray

SCHEDULES = ("constant_then_decay", "cosine", "constant")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int
    batch_size: int
    learning_rate: float
    momentum: float = 0.9
    schedule: str = "constant_then_decay"
    temperature: Temperature = field(default_factory=Temperature)
    seed: int = 0
    decay_floor: float = 0.01  # tail multiplier of constant_then_decay

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be > 0")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError("momentum must be in [0, 1)")
        if self.schedule not in SCHEDULES:
            raise ConfigError(f"unknown schedule {self.schedule!r}")
        if not 0.0 < self.decay_floor <= 1.0:
            raise ConfigError("decay_floor must be in (0, 1]")


def lr_multiplier(config: TrainConfig, epoch: int) -> float:
    """Schedule multiplier for a 0-based epoch index."""
    frac = epoch / max(config.epochs, 1)
    if config.schedule == "constant":
        return 1.0
    if config.schedule == "cosine":
        return 0.5 * (1.0 + np.cos(np.pi * frac))
    if frac < 0.5:
        return 1.0
    if frac < 0.9:
        t = (frac - 0.5) / 0.4
        return 1.0 + t * (config.decay_floor - 1.0)
    return config.decay_floor


def he_init(spec: NetworkSpec, seed) -> ParamVector:
    """Fan-in scaled Gaussian weights (suits ReLU), zero biases."""
    rng = np.random.default_rng(seed)
    values = np.zeros(count_params(spec))
    for slot in layer_slots(spec):
        fan_in = slot.shape[0]
        values[slot.weight] = rng.standard_normal(
            slot.shape[0] * slot.shape[1]
        ) * np.sqrt(2.0 / fan_in)
    return ParamVector(values, spec)


@dataclass
class SgdRun:
    """Final iterate plus the end-of-epoch full-data loss trace."""

    params: ParamVector
    loss_trace: Array


def run_sgd(
    spec: NetworkSpec,
    data,
    likelihood: LikelihoodSpec,
    prior: PriorSpec,
    config: TrainConfig,
    init: Optional[ParamVector] = None,
    epoch_end: Optional[Callable[[int, Array], None]] = None,
) -> SgdRun:
    """Momentum SGD on the tempered negative log posterior.

    Minibatch data terms are scaled by n / batch so every step sees an
    unbiased estimate of the full objective's gradient. ``epoch_end(epoch,
    values)`` observes the iterate after each epoch; SWA/SWAG collection and
    tests hook in there.
    """
    rng = np.random.default_rng(config.seed)
    w = (init.copy() if init is not None else he_init(spec, config.seed)).values
    velocity = np.zeros_like(w)
    x = np.asarray(data.inputs, dtype=np.float64)
    y = np.asarray(data.targets)
    n = len(x)
    batch = min(config.batch_size, n)
    trace = []
    for epoch in range(config.epochs):
        lr = config.learning_rate * lr_multiplier(config, epoch)
        order = rng.permutation(n)
        for start in range(0, n, batch):
            idx = order[start : start + batch]
            fn = make_objective(
                spec, x[idx], y[idx], likelihood, prior, config.temperature,
                data_scale=n / len(idx),
            )
            _, grad = fn(w)
            velocity = config.momentum * velocity - lr * grad
            w = w + velocity
        if not np.all(np.isfinite(w)):
            raise NumericalError(f"training diverged at epoch {epoch}")
        trace.append(loss_only(spec, w, x, y, likelihood, prior, config.temperature))
        if epoch_end is not None:
            epoch_end(epoch, w)
    if not np.isfinite(trace[-1]):
        raise NumericalError("training ended with a non-finite loss")
    return SgdRun(ParamVector(w, spec), np.array(trace))


def train_map(
    spec: NetworkSpec,
    data,
    likelihood: LikelihoodSpec,
    prior: PriorSpec,
    config: TrainConfig,
    init: Optional[ParamVector] = None,
) -> ParamVector:
    """SGD point estimate of the tempered posterior mode (final iterate)."""
    return run_sgd(spec, data, likelihood, prior, config, init=init).params


class SwagCollector:
    """Streaming first/second moments plus the last K deviation columns.

    ``update`` consumes one iterate; the deviation stored for it is
    (iterate - running mean after the update).
    """

    def __init__(self, dim: int, rank: int):
        if rank < 1:
            raise ConfigError("rank must be >= 1")
        self.dim = dim
        self.rank = rank
        self.count = 0
        self.mean = np.zeros(dim)
        self.sq_mean = np.zeros(dim)
        self._deviations: List[Array] = []

    def update(self, values: Array) -> None:
        values = np.asarray(values, dtype=np.float64)
        self.count += 1
        self.mean += (values - self.mean) / self.count
        self.sq_mean += (values * values - self.sq_mean) / self.count
        self._deviations.append(values - self.mean)
        if len(self._deviations) > self.rank:
            self._deviations.pop(0)

    @property
    def deviations(self) -> Array:
        if not self._deviations:
            return np.zeros((self.dim, 0))
        return np.stack(self._deviations, axis=1)

    def to_gaussian(self, spec: NetworkSpec) -> SwagGaussian:
        if self.count < self.rank + 1:
            raise ConfigError(
                f"need at least rank + 1 = {self.rank + 1} iterates, got {self.count}"
            )
        diag = np.maximum(self.sq_mean - self.mean**2, 0.0)
        return SwagGaussian(ParamVector(self.mean.copy(), spec), diag, self.deviations)


def train_swa(
    spec: NetworkSpec,
    data,
    likelihood: LikelihoodSpec,
    prior: PriorSpec,
    config: TrainConfig,
    collect_start: int,
    init: Optional[ParamVector] = None,
) -> ParamVector:
    """Running average of end-of-epoch iterates from ``collect_start`` onward."""
    if not 0 <= collect_start < config.epochs:
        raise ConfigError("collect_start must lie in [0, epochs)")
    collector = SwagCollector(count_params(spec), rank=1)

    def hook(epoch, values):
        if epoch >= collect_start:
            collector.update(values)

    run_sgd(spec, data, likelihood, prior, config, init=init, epoch_end=hook)
    return ParamVector(collector.mean.copy(), spec)


def fit_swag(
    spec: NetworkSpec,
    data,
    likelihood: LikelihoodSpec,
    prior: PriorSpec,
    config: TrainConfig,
    collect_start: int,
    rank: int = 20,
    init: Optional[ParamVector] = None,
) -> SwagGaussian:
    """SWAG Gaussian from the end-of-epoch iterates collected after ``collect_start``."""
    if not 0 <= collect_start < config.epochs:
        raise ConfigError("collect_start must lie in [0, epochs)")
    if config.epochs - collect_start < rank + 1:
        raise ConfigError(
            f"collecting {config.epochs - collect_start} iterates cannot support rank {rank}"
        )
    collector = SwagCollector(count_params(spec), rank)

    def hook(epoch, values):
        if epoch >= collect_start:
            collector.update(values)

    run_sgd(spec, data, likelihood, prior, config, init=init, epoch_end=hook)
    return collector.to_gaussian(spec)


def with_seed(config: TrainConfig, seed: int) -> TrainConfig:
    return replace(config, seed=seed)
