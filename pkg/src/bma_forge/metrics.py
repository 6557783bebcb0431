"""Bayesian model averaging via simple Monte Carlo, and evaluation metrics.

The model average p(y | x, D) ~= (1/J) sum_j p(y | x, w_j) is always formed
in probability space. Regression predictives are mixtures of Gaussians
N(f(x; w_j), noise_variance); classification predictives are averages of
softmax vectors.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigError
from .network import (
    Categorical,
    GaussianRegression,
    LikelihoodSpec,
    NetworkSpec,
    forward_values,
    softmax,
    strip_power,
)
from .inference.posterior import PosteriorApprox, posterior_draws, posterior_tag

Array = np.ndarray

PROB_TOL = 1e-9
MIN_PROB = 1e-12


@dataclass
class PredictiveSamples:
    """Per-test-input collections of sampled predictions.

    ``values`` is (J, n) of regression outputs f(x; w_j), or (J, n, C) of
    class-probability vectors. ``noise_variance`` carries the Gaussian
    likelihood's observation noise so downstream densities mix Gaussians.
    """

    inputs: Array
    values: Array
    kind: str  # "regression" | "classification"
    tag: str
    noise_variance: Optional[float] = None

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.kind == "regression":
            if self.values.ndim != 2:
                raise ConfigError("regression samples must be (J, n)")
            if self.noise_variance is None or not self.noise_variance > 0:
                raise ConfigError("regression predictive needs a positive noise variance")
        elif self.kind == "classification":
            if self.values.ndim != 3:
                raise ConfigError("classification samples must be (J, n, C)")
            sums = self.values.sum(axis=-1)
            if np.max(np.abs(sums - 1.0)) > PROB_TOL:
                raise ConfigError("class probability vectors must sum to 1")
        else:
            raise ConfigError(f"unknown predictive kind {self.kind!r}")
        if self.values.shape[1] != len(self.inputs):
            raise ConfigError("sample count mismatch across inputs")

    @property
    def n_draws(self) -> int:
        return self.values.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.values.shape[1]

    def mean_probs(self) -> Array:
        if self.kind != "classification":
            raise ConfigError("mean_probs is for classification predictives")
        return self.values.mean(axis=0)


def predictive_samples(
    spec: NetworkSpec,
    posterior: PosteriorApprox,
    test_inputs: Array,
    n_draws,
    seed,
    likelihood: LikelihoodSpec,
) -> PredictiveSamples:
    """Simple Monte Carlo predictive: draw w_j, evaluate p(y | x, w_j).

    Dirac ensembles are enumerated (J becomes the ensemble size).
    """
    base, _ = strip_power(likelihood)
    draws = posterior_draws(posterior, n_draws, seed)
    x = np.asarray(test_inputs, dtype=np.float64)
    tag = f"{posterior_tag(posterior)}:J={len(draws)}"
    if isinstance(base, GaussianRegression):
        values = np.stack([forward_values(spec, w.values, x)[:, 0] for w in draws])
        return PredictiveSamples(x, values, "regression", tag, base.noise_variance)
    if isinstance(base, Categorical):
        values = np.stack([softmax(forward_values(spec, w.values, x)) for w in draws])
        return PredictiveSamples(x, values, "classification", tag)
    raise ConfigError(f"unsupported likelihood {base!r}")


def _check_targets(pred: PredictiveSamples, targets: Array) -> Array:
    targets = np.asarray(targets)
    if len(targets) != pred.n_inputs:
        raise ConfigError("targets do not align with predictive inputs")
    return targets


def nll(pred: PredictiveSamples, targets: Array) -> float:
    """Mean over test points of -log[(1/J) sum_j p(y | x, w_j)], log-sum-exp stabilized."""
    targets = _check_targets(pred, targets)
    j = pred.n_draws
    if pred.kind == "regression":
        y = targets.astype(np.float64).reshape(1, -1)
        var = pred.noise_variance
        log_comp = -0.5 * (y - pred.values) ** 2 / var - 0.5 * np.log(2.0 * np.pi * var)
        log_mix = _logsumexp(log_comp, axis=0) - np.log(j)
        return float(-log_mix.mean())
    probs = pred.values[:, np.arange(pred.n_inputs), targets.astype(np.int64)]
    mix = probs.mean(axis=0)
    if np.any(mix < MIN_PROB):
        warnings.warn("predictive mass clamped at 1e-12 for some test points")
        mix = np.maximum(mix, MIN_PROB)
    return float(-np.log(mix).mean())


def _logsumexp(a: Array, axis: int) -> Array:
    m = a.max(axis=axis, keepdims=True)
    return (m + np.log(np.exp(a - m).sum(axis=axis, keepdims=True))).squeeze(axis)


def accuracy(pred: PredictiveSamples, targets: Array) -> float:
    """Argmax of the averaged predictive vs labels; ties go to the lowest class."""
    if pred.kind != "classification":
        raise ConfigError("accuracy is defined for classification predictives")
    targets = _check_targets(pred, targets).astype(np.int64)
    decisions = pred.mean_probs().argmax(axis=1)
    return float(np.mean(decisions == targets))


def ece(pred: PredictiveSamples, targets: Array, n_bins: int = 10) -> float:
    """Expected calibration error over equal-width confidence bins on [0, 1]."""
    if n_bins < 1:
        raise ConfigError("n_bins must be >= 1")
    if pred.kind != "classification":
        raise ConfigError("ece is defined for classification predictives")
    targets = _check_targets(pred, targets).astype(np.int64)
    probs = pred.mean_probs()
    conf = probs.max(axis=1)
    correct = probs.argmax(axis=1) == targets
    bins = np.minimum((conf * n_bins).astype(np.int64), n_bins - 1)
    total = len(conf)
    err = 0.0
    for b in range(n_bins):
        mask = bins == b
        if not mask.any():
            continue
        err += (mask.sum() / total) * abs(correct[mask].mean() - conf[mask].mean())
    return float(err)


# ---------------------------------------------------------------------------
# One-dimensional Wasserstein distance
# ---------------------------------------------------------------------------


def wasserstein1(u: Array, v: Array) -> float:
    """W1 between empirical distributions via the quantile coupling.

    Equal sizes reduce to mean |sorted(u) - sorted(v)|; unequal sizes use the
    exact piecewise integral of |CDF_u - CDF_v|.
    """
    u = np.sort(np.asarray(u, dtype=np.float64))
    v = np.sort(np.asarray(v, dtype=np.float64))
    if u.size == 0 or v.size == 0:
        raise ConfigError("empty sample set")
    if u.size == v.size:
        return float(np.mean(np.abs(u - v)))
    both = np.sort(np.concatenate([u, v]))
    deltas = np.diff(both)
    cdf_u = np.searchsorted(u, both[:-1], side="right") / u.size
    cdf_v = np.searchsorted(v, both[:-1], side="right") / v.size
    return float(np.sum(np.abs(cdf_u - cdf_v) * deltas))


@dataclass
class W1Curve:
    """Per-location W1 between two predictive sample sets, plus its average."""

    per_location: Array
    mean: float


def wasserstein1_predictive(a: PredictiveSamples, b: PredictiveSamples) -> W1Curve:
    """Average over input locations of the marginal W1 between two predictives."""
    if a.kind != "regression" or b.kind != "regression":
        raise ConfigError("predictive W1 compares regression sample sets")
    if a.inputs.shape != b.inputs.shape or not np.array_equal(a.inputs, b.inputs):
        raise ConfigError("predictives were evaluated on different input grids")
    per = np.array(
        [wasserstein1(a.values[:, i], b.values[:, i]) for i in range(a.n_inputs)]
    )
    return W1Curve(per, float(per.mean()))


@dataclass
class PredictiveBand:
    mean: Array
    lower: Array
    upper: Array


def predictive_band(
    pred: PredictiveSamples,
    k_sigma: Optional[float] = None,
    quantiles: Optional[tuple] = None,
    include_noise: bool = True,
) -> PredictiveBand:
    """Per-location mean and interval.

    Exactly one of ``k_sigma`` (Gaussian-mixture standard deviation via the law
    of total variance, optionally including observation noise) or ``quantiles``
    (empirical quantiles of the sampled functions) must be given.
    """
    if pred.kind != "regression":
        raise ConfigError("bands are defined for regression predictives")
    if (k_sigma is None) == (quantiles is None):
        raise ConfigError("pass exactly one of k_sigma or quantiles")
    mean = pred.values.mean(axis=0)
    if k_sigma is not None:
        var = pred.values.var(axis=0)
        if include_noise:
            var = var + pred.noise_variance
        half = k_sigma * np.sqrt(var)
        return PredictiveBand(mean, mean - half, mean + half)
    lo, hi = quantiles
    if not 0.0 <= lo < hi <= 1.0:
        raise ConfigError("quantiles must satisfy 0 <= lo < hi <= 1")
    lower = np.quantile(pred.values, lo, axis=0, method="inverted_cdf")
    upper = np.quantile(pred.values, hi, axis=0, method="inverted_cdf")
    return PredictiveBand(mean, lower, upper)
