"""Dense ReLU networks over flat parameter vectors, with exact reverse-mode gradients.

Conventions used throughout the package:

* all arithmetic is float64;
* a network is a point ``w`` in R^d, stored flat so that posterior
  approximations can treat parameters as vectors;
* hidden layers apply ReLU, the output layer is linear (softmax, when
  needed, lives inside the categorical likelihood);
* a layer ``l`` maps ``h @ W_l + b_l`` with ``W_l`` of shape
  ``(fan_in, fan_out)``.
"""
from __future__ import annotations

import functools
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .errors import ConfigError

Array = np.ndarray


@dataclass(frozen=True)
class NetworkSpec:
    """Architecture: layer sizes (input, hidden..., output) plus per-layer bias flags."""

    layer_sizes: tuple
    use_bias: tuple

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        flags = tuple(bool(b) for b in self.use_bias)
        if len(sizes) < 2:
            raise ConfigError("layer_sizes needs at least an input and an output size")
        if any(s < 1 for s in sizes):
            raise ConfigError(f"layer sizes must be >= 1, got {sizes}")
        if len(flags) != len(sizes) - 1:
            raise ConfigError(
                f"need one bias flag per layer: {len(sizes) - 1} layers, {len(flags)} flags"
            )
        object.__setattr__(self, "layer_sizes", sizes)
        object.__setattr__(self, "use_bias", flags)

    @staticmethod
    def dense(layer_sizes, bias: bool = True) -> "NetworkSpec":
        """Uniform-bias convenience constructor."""
        return NetworkSpec(tuple(layer_sizes), (bias,) * (len(layer_sizes) - 1))

    @property
    def n_layers(self) -> int:
        return len(self.layer_sizes) - 1

    @property
    def input_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def output_dim(self) -> int:
        return self.layer_sizes[-1]


def count_params(spec: NetworkSpec) -> int:
    """Total number of weights and biases implied by the spec."""
    total = 0
    for fan_in, fan_out, bias in zip(spec.layer_sizes, spec.layer_sizes[1:], spec.use_bias):
        total += fan_in * fan_out + (fan_out if bias else 0)
    return total


@dataclass(frozen=True)
class LayerSlot:
    """Offsets of one layer inside a flat parameter vector."""

    weight: slice
    shape: tuple  # (fan_in, fan_out)
    bias: Optional[slice]


@functools.lru_cache(maxsize=None)
def layer_slots(spec: NetworkSpec) -> tuple:
    """Non-overlapping slices mapping each layer's W and b into the flat vector."""
    slots = []
    offset = 0
    for fan_in, fan_out, bias in zip(spec.layer_sizes, spec.layer_sizes[1:], spec.use_bias):
        w = slice(offset, offset + fan_in * fan_out)
        offset = w.stop
        b = None
        if bias:
            b = slice(offset, offset + fan_out)
            offset = b.stop
        slots.append(LayerSlot(w, (fan_in, fan_out), b))
    return tuple(slots)


@dataclass
class ParamVector:
    """Flat float64 parameter vector tied to the spec that defines its layout."""

    values: Array
    spec: NetworkSpec

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 1:
            raise ConfigError(f"parameter vector must be 1-d, got shape {values.shape}")
        expected = count_params(self.spec)
        if values.size != expected:
            raise ConfigError(
                f"parameter vector has {values.size} entries, spec needs {expected}"
            )
        self.values = values

    @staticmethod
    def zeros(spec: NetworkSpec) -> "ParamVector":
        return ParamVector(np.zeros(count_params(spec)), spec)

    @property
    def layout(self) -> tuple:
        return layer_slots(self.spec)

    def layer(self, index: int):
        """(W, b) views of one layer; b is None for bias-free layers."""
        slot = self.layout[index]
        w = self.values[slot.weight].reshape(slot.shape)
        b = self.values[slot.bias] if slot.bias is not None else None
        return w, b

    def copy(self) -> "ParamVector":
        return ParamVector(self.values.copy(), self.spec)


def _unpack(spec: NetworkSpec, values: Array):
    out = []
    for slot in layer_slots(spec):
        w = values[slot.weight].reshape(slot.shape)
        b = values[slot.bias] if slot.bias is not None else None
        out.append((w, b))
    return out


def _check_inputs(spec: NetworkSpec, inputs: Array) -> Array:
    x = np.asarray(inputs, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != spec.input_dim:
        raise ConfigError(
            f"inputs of shape {np.shape(inputs)} do not match input dim {spec.input_dim}"
        )
    return x


def forward_values(spec: NetworkSpec, values: Array, inputs: Array) -> Array:
    """Forward pass on a raw flat vector; returns logits / regression outputs (n, out)."""
    x = _check_inputs(spec, inputs)
    h = x
    layers = _unpack(spec, values)
    last = len(layers) - 1
    for i, (w, b) in enumerate(layers):
        h = h @ w
        if b is not None:
            h = h + b
        if i < last:
            h = np.maximum(h, 0.0)
    return h


def forward(spec: NetworkSpec, params: ParamVector, inputs: Array) -> Array:
    """Deterministic forward pass: ReLU hidden layers, linear output layer."""
    if params.spec != spec:
        raise ConfigError("parameter vector was built for a different spec")
    return forward_values(spec, params.values, inputs)


def forward_cached(spec: NetworkSpec, values: Array, inputs: Array):
    """Forward pass that keeps pre-activations and activations for backprop."""
    x = _check_inputs(spec, inputs)
    layers = _unpack(spec, values)
    last = len(layers) - 1
    pre = []
    acts = [x]
    h = x
    for i, (w, b) in enumerate(layers):
        z = h @ w
        if b is not None:
            z = z + b
        pre.append(z)
        h = np.maximum(z, 0.0) if i < last else z
        acts.append(h)
    return h, (pre, acts)


def backprop(spec: NetworkSpec, values: Array, cache, output_grad: Array) -> Array:
    """Gradient of sum(output * output_grad) w.r.t. the flat parameters."""
    pre, acts = cache
    layers = _unpack(spec, values)
    grad = np.zeros_like(values)
    slots = layer_slots(spec)
    g = np.asarray(output_grad, dtype=np.float64)
    for i in range(len(layers) - 1, -1, -1):
        w, _ = layers[i]
        slot = slots[i]
        grad[slot.weight] = (acts[i].T @ g).ravel()
        if slot.bias is not None:
            grad[slot.bias] = g.sum(axis=0)
        if i > 0:
            g = (g @ w.T) * (pre[i - 1] > 0.0)
    return grad


def backprop_signals(spec: NetworkSpec, values: Array, cache, output_grad: Array):
    """Per-layer backpropagated signals (n, fan_out), output layer last.

    Used by the curvature code, which needs per-example gradient structure
    rather than the summed gradient.
    """
    pre, acts = cache
    layers = _unpack(spec, values)
    signals = [None] * len(layers)
    g = np.asarray(output_grad, dtype=np.float64)
    for i in range(len(layers) - 1, -1, -1):
        signals[i] = g
        if i > 0:
            w, _ = layers[i]
            g = (g @ w.T) * (pre[i - 1] > 0.0)
    return signals, acts


# ---------------------------------------------------------------------------
# Likelihoods
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GaussianRegression:
    """y ~ N(f(x; w), noise_variance); output dimension must be 1."""

    noise_variance: float

    def __post_init__(self):
        if not self.noise_variance > 0:
            raise ConfigError("noise_variance must be > 0")

    @property
    def output_dim(self) -> int:
        return 1


@dataclass(frozen=True)
class Categorical:
    """y ~ Categorical(softmax(f(x; w))); output dimension equals n_classes."""

    n_classes: int

    def __post_init__(self):
        if self.n_classes < 2:
            raise ConfigError("Categorical needs at least 2 classes")

    @property
    def output_dim(self) -> int:
        return self.n_classes


@dataclass(frozen=True)
class TemperedLikelihood:
    """Unnormalized power likelihood p(D|w)^power.

    With power = 1/T this is the observation model whose standard (T = 1)
    posterior coincides with the temperature-T posterior of the base model.
    """

    base: Union[GaussianRegression, Categorical]
    power: float

    def __post_init__(self):
        if not self.power > 0:
            raise ConfigError("power must be > 0")

    @property
    def output_dim(self) -> int:
        return self.base.output_dim


LikelihoodSpec = Union[GaussianRegression, Categorical, TemperedLikelihood]


@dataclass(frozen=True)
class Temperature:
    """Posterior temperature T; T = 1 is the standard Bayes posterior."""

    t: float = 1.0

    def __post_init__(self):
        if not self.t > 0:
            raise ConfigError("temperature must be > 0")


def strip_power(likelihood: LikelihoodSpec):
    """Reduce nested power likelihoods to (base likelihood, total power)."""
    power = 1.0
    while isinstance(likelihood, TemperedLikelihood):
        power = power * likelihood.power
        likelihood = likelihood.base
    return likelihood, power


def softmax(logits: Array) -> Array:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits: Array) -> Array:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def _check_targets(likelihood, outputs: Array, targets: Array):
    base, _ = strip_power(likelihood)
    if outputs.shape[1] != base.output_dim:
        raise ConfigError(
            f"outputs have dim {outputs.shape[1]}, likelihood expects {base.output_dim}"
        )
    if isinstance(base, GaussianRegression):
        y = np.asarray(targets, dtype=np.float64).reshape(-1, 1)
    else:
        y = np.asarray(targets)
        if not np.issubdtype(y.dtype, np.integer):
            yi = y.astype(np.int64)
            if not np.array_equal(yi, y):
                raise ConfigError("categorical targets must be integer class labels")
            y = yi
        if y.min() < 0 or y.max() >= base.n_classes:
            raise ConfigError("class labels out of range")
    if y.shape[0] != outputs.shape[0]:
        raise ConfigError("targets do not align with outputs")
    return base, y


def data_nll(likelihood: LikelihoodSpec, outputs: Array, targets: Array) -> float:
    """Negative log likelihood of the batch, summed over examples."""
    base, power = strip_power(likelihood)
    base, y = _check_targets(base, outputs, targets)
    if isinstance(base, GaussianRegression):
        var = base.noise_variance
        r = outputs - y
        nll = 0.5 * float(np.sum(r * r)) / var + 0.5 * len(y) * np.log(2.0 * np.pi * var)
    else:
        logp = log_softmax(outputs)
        nll = -float(logp[np.arange(len(y)), y].sum())
    return power * nll


def data_nll_grad(likelihood: LikelihoodSpec, outputs: Array, targets: Array):
    """(nll, d nll / d outputs) for the batch."""
    base, power = strip_power(likelihood)
    base, y = _check_targets(base, outputs, targets)
    if isinstance(base, GaussianRegression):
        var = base.noise_variance
        r = outputs - y
        nll = 0.5 * float(np.sum(r * r)) / var + 0.5 * len(y) * np.log(2.0 * np.pi * var)
        grad = r / var
    else:
        logp = log_softmax(outputs)
        nll = -float(logp[np.arange(len(y)), y].sum())
        grad = np.exp(logp)
        grad[np.arange(len(y)), y] -= 1.0
    return power * nll, power * grad
