"""Layer-wise Gaussian parameter priors and the function-space structure they induce.

Weights in layer i are drawn N(0, alpha_i^2), biases N(0, beta_i^2). A scale
of exactly zero is a degenerate clamp-to-zero prior, allowed only so tests can
pin parameters; every regular code path requires positive scales.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError, DegenerateCorrelationError
from .network import (
    NetworkSpec,
    ParamVector,
    count_params,
    forward_values,
    layer_slots,
    softmax,
)

Array = np.ndarray


@dataclass(frozen=True)
class PriorSpec:
    """Per-layer Gaussian scales: alpha_i for weights, beta_i for biases."""

    weight_scales: tuple
    bias_scales: tuple

    def __post_init__(self):
        ws = tuple(float(a) for a in self.weight_scales)
        bs = tuple(float(b) for b in self.bias_scales)
        if len(ws) != len(bs):
            raise ConfigError("need one (alpha, beta) pair per layer")
        if any(a < 0 for a in ws) or any(b < 0 for b in bs):
            raise ConfigError("prior scales must be non-negative")
        object.__setattr__(self, "weight_scales", ws)
        object.__setattr__(self, "bias_scales", bs)

    @staticmethod
    def isotropic(n_layers: int, alpha: float, beta: Optional[float] = None) -> "PriorSpec":
        beta = alpha if beta is None else beta
        return PriorSpec((alpha,) * n_layers, (beta,) * n_layers)

    @property
    def n_layers(self) -> int:
        return len(self.weight_scales)


def _check_layers(spec: NetworkSpec, prior: PriorSpec):
    if prior.n_layers != spec.n_layers:
        raise ConfigError(
            f"prior has {prior.n_layers} layers, network has {spec.n_layers}"
        )


def scale_vector(prior: PriorSpec, spec: NetworkSpec) -> Array:
    """Per-coordinate prior standard deviations, in flat layout order."""
    _check_layers(spec, prior)
    scales = np.empty(count_params(spec))
    for i, slot in enumerate(layer_slots(spec)):
        scales[slot.weight] = prior.weight_scales[i]
        if slot.bias is not None:
            scales[slot.bias] = prior.bias_scales[i]
    return scales


def sample_params(spec: NetworkSpec, prior: PriorSpec, seed) -> ParamVector:
    """One draw w ~ p(w): each weight N(0, alpha_i^2), each bias N(0, beta_i^2)."""
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal(count_params(spec))
    return ParamVector(noise * scale_vector(prior, spec), spec)


def neg_log_prior_and_grad(values: Array, scales: Array):
    """(-log p(w), gradient). Zero-scale coordinates must be exactly zero."""
    free = scales > 0
    clamped = values[~free]
    if clamped.size and np.any(clamped != 0.0):
        raise ConfigError("nonzero parameter under a zero prior scale")
    v = values[free]
    s = scales[free]
    neg = 0.5 * float(np.sum((v / s) ** 2)) + float(np.sum(np.log(s))) + 0.5 * v.size * np.log(
        2.0 * np.pi
    )
    grad = np.zeros_like(values)
    grad[free] = values[free] / (scales[free] ** 2)
    return neg, grad


def log_prior_density(prior: PriorSpec, params: ParamVector) -> float:
    """Exact Gaussian log density of the parameters, summed over layers."""
    scales = scale_vector(prior, params.spec)
    neg, _ = neg_log_prior_and_grad(params.values, scales)
    return -neg


# ---------------------------------------------------------------------------
# Output-scaling identities for ReLU networks
# ---------------------------------------------------------------------------


@dataclass
class ScalingReport:
    """Result of checking an exact prior-rescaling identity."""

    factor: float
    max_rel_deviation: float
    n_inputs: int

    def holds(self, tol: float = 1e-9) -> bool:
        return self.max_rel_deviation <= tol


def _probe_inputs(spec: NetworkSpec, rng, n_inputs: int) -> Array:
    return rng.standard_normal((n_inputs, spec.input_dim))


def _max_rel_dev(actual: Array, expected: Array) -> float:
    norm = max(float(np.max(np.abs(expected))), 1e-300)
    return float(np.max(np.abs(actual - expected))) / norm


def verify_output_scaling(
    spec: NetworkSpec, weight_scales: Sequence[float], seed, n_inputs: int = 16
) -> ScalingReport:
    """Bias-free ReLU identity: f(x; {alpha_i}) = (prod alpha_i) * f(x; {1}).

    Shared standard-normal noise E_i is drawn once; the scaled network uses
    alpha_i * E_i per layer. Positive homogeneity of ReLU pushes all scales
    to the output.
    """
    if any(spec.use_bias):
        raise ConfigError("output-scaling identity requires a bias-free network")
    scales = tuple(float(a) for a in weight_scales)
    if len(scales) != spec.n_layers:
        raise ConfigError("need one weight scale per layer")
    rng = np.random.default_rng(seed)
    unit = rng.standard_normal(count_params(spec))
    scaled = unit * scale_vector(PriorSpec(scales, (0.0,) * spec.n_layers), spec)
    x = _probe_inputs(spec, rng, n_inputs)
    base = forward_values(spec, unit, x)
    out = forward_values(spec, scaled, x)
    factor = float(np.prod(scales))
    return ScalingReport(factor, _max_rel_dev(out, factor * base), n_inputs)


def verify_geometric_scaling(
    spec: NetworkSpec,
    gamma: float,
    seed,
    base_weight_scales: Optional[Sequence[float]] = None,
    base_bias_scales: Optional[Sequence[float]] = None,
    n_inputs: int = 16,
) -> ScalingReport:
    """Geometric identity with biases: alpha_i = gamma*a_i, beta_i = gamma^i*b_i
    rescales outputs by gamma^n relative to the base scales (a, b).

    With a_i = b_i = 1 this is the plain gamma / gamma^i rule.
    """
    if not gamma > 0:
        raise ConfigError("gamma must be > 0")
    n = spec.n_layers
    a = tuple(float(x) for x in (base_weight_scales or (1.0,) * n))
    b = tuple(float(x) for x in (base_bias_scales or (1.0,) * n))
    rng = np.random.default_rng(seed)
    unit = rng.standard_normal(count_params(spec))
    base_prior = PriorSpec(a, b)
    geo_prior = PriorSpec(
        tuple(gamma * ai for ai in a),
        tuple(gamma ** (i + 1) * bi for i, bi in enumerate(b)),
    )
    x = _probe_inputs(spec, rng, n_inputs)
    base = forward_values(spec, unit * scale_vector(base_prior, spec), x)
    out = forward_values(spec, unit * scale_vector(geo_prior, spec), x)
    factor = float(gamma**n)
    return ScalingReport(factor, _max_rel_dev(out, factor * base), n_inputs)


# ---------------------------------------------------------------------------
# Prior correlation structure over inputs
# ---------------------------------------------------------------------------


@dataclass
class CorrelationDiagram:
    """Pairwise prior logit correlations over a labelled input set.

    ``matrix[i, j]`` is the Pearson correlation, across the shared weight
    samples, of the chosen class logit at inputs i and j. ``block_means``
    aggregates the off-diagonal entries per (class, class) pair.
    """

    matrix: Array
    labels: Array
    classes: tuple
    block_means: Array
    n_samples: int

    def mean_within_class(self) -> float:
        k = np.arange(len(self.classes))
        return float(np.mean(self.block_means[k, k]))

    def mean_cross_class(self) -> float:
        k = len(self.classes)
        off = ~np.eye(k, dtype=bool)
        return float(np.mean(self.block_means[off]))

    def write_csv(self, matrix_path, blocks_path) -> None:
        with open(matrix_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["index"] + [str(i) for i in range(len(self.labels))])
            for i, row in enumerate(self.matrix):
                writer.writerow([str(i)] + [repr(float(v)) for v in row])
        with open(blocks_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["class_a", "class_b", "mean_correlation"])
            for i, ca in enumerate(self.classes):
                for j, cb in enumerate(self.classes):
                    writer.writerow([str(ca), str(cb), repr(float(self.block_means[i, j]))])


def sample_logits(
    spec: NetworkSpec, prior: PriorSpec, inputs: Array, class_index: int, n_samples: int, seed
) -> Array:
    """(n_samples, n_inputs) matrix of one class logit under prior weight draws."""
    if not 0 <= class_index < spec.output_dim:
        raise ConfigError("class_index out of range")
    rng = np.random.default_rng(seed)
    scales = scale_vector(prior, spec)
    d = count_params(spec)
    out = np.empty((n_samples, len(inputs)))
    for s in range(n_samples):
        values = rng.standard_normal(d) * scales
        out[s] = forward_values(spec, values, inputs)[:, class_index]
    return out


def _pearson_matrix(samples: Array) -> Array:
    centered = samples - samples.mean(axis=0)
    norms = np.sqrt(np.sum(centered**2, axis=0))
    if np.any(norms == 0.0):
        bad = int(np.flatnonzero(norms == 0.0)[0])
        raise DegenerateCorrelationError(
            f"logit at input {bad} has zero variance across samples"
        )
    c = (centered.T @ centered) / np.outer(norms, norms)
    np.fill_diagonal(c, 1.0)
    return np.clip(c, -1.0, 1.0)


def prior_logit_correlation(
    spec: NetworkSpec,
    prior: PriorSpec,
    inputs: Array,
    labels: Array,
    class_index: int = 0,
    n_samples: int = 100,
    seed=0,
) -> CorrelationDiagram:
    """Pairwise Pearson correlations of one class logit across shared prior samples.

    One set of ``n_samples`` weight draws is reused for every input pair;
    within-class block means exclude the unit diagonal.
    """
    if n_samples < 2:
        raise ConfigError("need at least 2 samples for a correlation")
    inputs = np.asarray(inputs, dtype=np.float64)
    labels = np.asarray(labels)
    if len(inputs) == 0:
        raise ConfigError("inputs must be nonempty")
    if len(labels) != len(inputs):
        raise ConfigError("labels do not align with inputs")
    samples = sample_logits(spec, prior, inputs, class_index, n_samples, seed)
    matrix = _pearson_matrix(samples)
    classes = tuple(sorted(set(int(c) for c in labels)))
    k = len(classes)
    blocks = np.zeros((k, k))
    for i, ca in enumerate(classes):
        for j, cb in enumerate(classes):
            sub = matrix[np.ix_(labels == ca, labels == cb)]
            if i == j:
                mask = ~np.eye(sub.shape[0], dtype=bool)
                blocks[i, j] = sub[mask].mean() if mask.any() else 1.0
            else:
                blocks[i, j] = sub.mean()
    return CorrelationDiagram(matrix, labels, classes, blocks, n_samples)


@dataclass
class PriorPredictiveSummary:
    """Dataset-averaged class probabilities, per weight sample and overall."""

    per_sample: Array  # (n_samples, n_classes)
    averaged: Array  # (n_classes,)


def prior_predictive_summary(
    spec: NetworkSpec, prior: PriorSpec, inputs: Array, n_samples: int, seed
) -> PriorPredictiveSummary:
    """Softmax of prior-sampled logits, averaged over the dataset per sample.

    The sample average of ``per_sample`` is the (empirical) prior predictive.
    """
    if spec.output_dim < 2:
        raise ConfigError("prior predictive summary needs a categorical output")
    inputs = np.asarray(inputs, dtype=np.float64)
    rng = np.random.default_rng(seed)
    scales = scale_vector(prior, spec)
    d = count_params(spec)
    per_sample = np.empty((n_samples, spec.output_dim))
    for s in range(n_samples):
        values = rng.standard_normal(d) * scales
        probs = softmax(forward_values(spec, values, inputs))
        per_sample[s] = probs.mean(axis=0)
    return PriorPredictiveSummary(per_sample, per_sample.mean(axis=0))


# ---------------------------------------------------------------------------
# Correlation decay under input perturbations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BnnPriorModel:
    spec: NetworkSpec
    prior: PriorSpec
    n_samples: int = 100


@dataclass(frozen=True)
class LinearPriorModel:
    """Linear model w^T x with spherical prior: corr = x.y / (|x| |y|), scale-free."""


@dataclass(frozen=True)
class RbfPriorModel:
    lengthscale: float


def _flatten_images(images: Array) -> Array:
    images = np.asarray(images, dtype=np.float64)
    return images.reshape(len(images), -1)


def _pair_correlations(model, originals: Array, perturbed: Array, seed) -> Array:
    x = _flatten_images(originals)
    y = _flatten_images(perturbed)
    if isinstance(model, BnnPriorModel):
        stacked = np.concatenate([x, y], axis=0)
        logits = sample_logits(model.spec, model.prior, stacked, 0, model.n_samples, seed)
        a, b = logits[:, : len(x)], logits[:, len(x) :]
        ac = a - a.mean(axis=0)
        bc = b - b.mean(axis=0)
        denom = np.sqrt(np.sum(ac**2, axis=0) * np.sum(bc**2, axis=0))
        if np.any(denom == 0.0):
            raise DegenerateCorrelationError("zero-variance logit in perturbation pair")
        return np.sum(ac * bc, axis=0) / denom
    if isinstance(model, LinearPriorModel):
        norms = np.linalg.norm(x, axis=1) * np.linalg.norm(y, axis=1)
        if np.any(norms == 0.0):
            raise DegenerateCorrelationError("zero-norm image in linear correlation")
        return np.sum(x * y, axis=1) / norms
    if isinstance(model, RbfPriorModel):
        d2 = np.sum((x - y) ** 2, axis=1)
        return np.exp(-d2 / (2.0 * model.lengthscale**2))
    raise ConfigError(f"unknown prior model {model!r}")


@dataclass
class DecayCurve:
    """Mean prior correlation between clean and perturbed inputs per intensity."""

    intensities: tuple
    mean: Array
    std: Array


def perturbation_correlation_decay(
    model, images: Array, perturb_fn, intensities: Sequence[int], n_samples: int = 100, seed=0
) -> DecayCurve:
    """Correlation between f(x) and f(x_perturbed) as perturbation intensity grows.

    ``perturb_fn(images, intensity, seed) -> images`` must be the identity at
    intensity 0. The same weight-sample seed is reused across intensities so
    curves differ only through the inputs.
    """
    levels = tuple(int(i) for i in intensities)
    if list(levels) != sorted(levels):
        raise ConfigError("intensities must be sorted ascending")
    if levels and levels[0] != 0:
        raise ConfigError("intensity grid must start at 0 (identity perturbation)")
    if isinstance(model, BnnPriorModel):
        model = BnnPriorModel(model.spec, model.prior, n_samples)
    means, stds = [], []
    for k, level in enumerate(levels):
        perturbed = perturb_fn(images, level, seed + 7919 * k)
        corr = _pair_correlations(model, images, perturbed, seed)
        means.append(float(np.mean(corr)))
        stds.append(float(np.std(corr)))
    return DecayCurve(levels, np.array(means), np.array(stds))


def mean_pairwise_rbf_correlation(images: Array, lengthscale: float) -> float:
    """Mean of exp(-|x_i - x_j|^2 / 2 l^2) over unordered image pairs i < j."""
    x = _flatten_images(images)
    sq = np.sum(x**2, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (x @ x.T)
    iu = np.triu_indices(len(x), k=1)
    return float(np.mean(np.exp(-np.maximum(d2[iu], 0.0) / (2.0 * lengthscale**2))))


def mean_pairwise_bnn_correlation(
    spec: NetworkSpec, prior: PriorSpec, images: Array, n_samples: int = 200, seed=0
) -> float:
    """Mean off-diagonal prior logit correlation over image pairs; the
    calibration target for the RBF baseline."""
    logits = sample_logits(spec, prior, _flatten_images(images), 0, n_samples, seed)
    matrix = _pearson_matrix(logits)
    iu = np.triu_indices(len(matrix), k=1)
    return float(np.mean(matrix[iu]))


def calibrate_rbf_lengthscale(
    target: float, images: Array, tol: float = 1e-3, max_iter: int = 200
) -> float:
    """Bisection on the lengthscale until the mean pairwise RBF correlation
    matches the target within tol."""
    if not 0.0 < target < 1.0:
        raise ConfigError(f"target correlation {target} is unreachable (need 0 < t < 1)")
    x = _flatten_images(images)
    iu = np.triu_indices(len(x), k=1)
    sq = np.sum(x**2, axis=1)
    d2 = (sq[:, None] + sq[None, :] - 2.0 * (x @ x.T))[iu]
    if len(d2) == 0:
        raise ConfigError("need at least two images to calibrate")
    if np.all(d2 <= 0.0):
        raise ConfigError("identical image set: every lengthscale gives correlation 1")
    scale = float(np.sqrt(np.mean(np.maximum(d2, 0.0))))
    lo, hi = 1e-8 * scale, 1e8 * scale

    def mean_corr(ell: float) -> float:
        return float(np.mean(np.exp(-np.maximum(d2, 0.0) / (2.0 * ell**2))))

    if not mean_corr(lo) <= target <= mean_corr(hi):
        raise ConfigError("target correlation not bracketed by the lengthscale range")
    for _ in range(max_iter):
        mid = np.sqrt(lo * hi)
        value = mean_corr(mid)
        if abs(value - target) <= tol:
            return float(mid)
        if value < target:
            lo = mid
        else:
            hi = mid
    raise ConfigError("lengthscale bisection failed to converge")
