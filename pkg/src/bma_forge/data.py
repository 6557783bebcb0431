"""Dataset generation, ingestion (IDX), label corruption, and image perturbation.

Everything here is seed-deterministic and records its provenance in the
dataset metadata.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigError, DataFormatError
from .network import NetworkSpec, count_params, forward_values

Array = np.ndarray


@dataclass
class Dataset:
    inputs: Array
    targets: Array
    task: str  # "regression" | "classification"
    n_classes: Optional[int] = None
    split: str = "train"
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        if self.inputs.ndim == 1:
            self.inputs = self.inputs[:, None]
        if len(self.inputs) == 0:
            raise ConfigError("dataset must be nonempty")
        if np.any(~np.isfinite(self.inputs)):
            raise ConfigError("dataset inputs contain non-finite values")
        if self.task == "classification":
            self.targets = np.asarray(self.targets).astype(np.int64)
            if self.n_classes is None:
                raise ConfigError("classification datasets need n_classes")
            if self.targets.min() < 0 or self.targets.max() >= self.n_classes:
                raise ConfigError("labels out of range")
        elif self.task == "regression":
            self.targets = np.asarray(self.targets, dtype=np.float64).ravel()
        else:
            raise ConfigError(f"unknown task {self.task!r}")
        if len(self.targets) != len(self.inputs):
            raise ConfigError("targets do not align with inputs")

    def __len__(self) -> int:
        return len(self.inputs)


@dataclass
class ImageSet:
    """Stack of same-sized grayscale images with labels, pixels in [0, 1]."""

    images: Array  # (n, H, W)
    labels: Array

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float64)
        self.labels = np.asarray(self.labels).astype(np.int64)
        if self.images.ndim != 3:
            raise ConfigError("images must be a (n, H, W) stack")
        if len(self.labels) != len(self.images):
            raise ConfigError("labels do not align with images")

    def __len__(self) -> int:
        return len(self.images)

    def flat(self) -> Array:
        return self.images.reshape(len(self.images), -1)

    def to_dataset(self, n_classes: Optional[int] = None, split: str = "train") -> Dataset:
        n_classes = n_classes if n_classes is not None else int(self.labels.max()) + 1
        return Dataset(self.flat(), self.labels, "classification", n_classes, split)


# ---------------------------------------------------------------------------
# Toy regression task
# ---------------------------------------------------------------------------

TOY_HIDDEN = (10, 10, 10)
TOY_CLUSTERS = ((-4.0, -2.0), (-0.5, 0.5), (2.0, 4.0))


def toy_network_spec() -> NetworkSpec:
    """Generator/model architecture: inputs (x, x^2), three hidden layers of 10."""
    return NetworkSpec.dense((2,) + TOY_HIDDEN + (1,), bias=True)


def toy_features(x: Array) -> Array:
    x = np.asarray(x, dtype=np.float64).ravel()
    return np.column_stack([x, x**2])


@dataclass
class ToyRegression:
    train: Dataset
    test: Dataset  # targets hold the noise-free generator values
    generator_params: Array

    @property
    def train_x(self) -> Array:
        return self.train.inputs[:, 0]

    @property
    def test_x(self) -> Array:
        return self.test.inputs[:, 0]


def gen_toy_regression(
    seed,
    n_per_cluster: int = 40,
    noise_std: float = 0.1,
    generator_scale: float = 0.1,
    clusters: Sequence[Tuple[float, float]] = TOY_CLUSTERS,
    test_range: Tuple[float, float] = (-6.0, 6.0),
    test_points: int = 200,
) -> ToyRegression:
    """Clustered 1-d regression data from a randomly drawn three-hidden-layer net.

    Generator weights are N(0, generator_scale^2); observation noise is
    N(0, noise_std^2); the default three clusters of 40 points give the
    120-point training set, and the test grid extends past the clusters to
    expose between-cluster uncertainty.
    """
    rng = np.random.default_rng(seed)
    spec = toy_network_spec()
    params = rng.standard_normal(count_params(spec)) * generator_scale
    xs = np.concatenate(
        [rng.uniform(lo, hi, size=n_per_cluster) for lo, hi in clusters]
    )
    feats = toy_features(xs)
    clean = forward_values(spec, params, feats)[:, 0]
    targets = clean + noise_std * rng.standard_normal(len(xs))
    meta = {
        "generator": "toy_regression",
        "seed": seed,
        "noise_std": noise_std,
        "generator_scale": generator_scale,
        "clusters": tuple(clusters),
        "raw_x": xs,
    }
    train = Dataset(feats, targets, "regression", split="train", metadata=meta)
    grid = np.linspace(test_range[0], test_range[1], test_points)
    grid_feats = toy_features(grid)
    grid_clean = forward_values(spec, params, grid_feats)[:, 0]
    test = Dataset(
        grid_feats,
        grid_clean,
        "regression",
        split="test",
        metadata={"generator": "toy_regression_grid", "seed": seed, "raw_x": grid},
    )
    return ToyRegression(train, test, params)


# ---------------------------------------------------------------------------
# Label corruption
# ---------------------------------------------------------------------------


def corrupt_labels(ds: Dataset, fraction: float, seed) -> Dataset:
    """Resample labels of round(fraction * n) points uniformly over the classes.

    Resampling may redraw the original label; the touched indices are recorded
    in the metadata.
    """
    if ds.task != "classification":
        raise ConfigError("label corruption requires a classification dataset")
    if not 0.0 <= fraction <= 1.0:
        raise ConfigError("fraction must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    count = int(np.floor(fraction * len(ds) + 0.5))
    idx = np.sort(rng.choice(len(ds), size=count, replace=False))
    labels = ds.targets.copy()
    labels[idx] = rng.integers(0, ds.n_classes, size=count)
    meta = dict(ds.metadata)
    meta.update({"corrupted_fraction": fraction, "corrupted_indices": idx, "corruption_seed": seed})
    return Dataset(ds.inputs.copy(), labels, ds.task, ds.n_classes, ds.split, meta)


# ---------------------------------------------------------------------------
# IDX container
# ---------------------------------------------------------------------------

IDX_LABEL_MAGIC = 0x00000801
IDX_IMAGE_MAGIC = 0x00000803


def load_idx(path) -> Array:
    """Parse an IDX file of unsigned bytes (big-endian header).

    Images (magic 0x803) come back as float64 in [0, 1]; labels (0x801) as
    int64.
    """
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 4:
        raise DataFormatError(f"{path}: truncated IDX header")
    magic = struct.unpack(">I", raw[:4])[0]
    if magic not in (IDX_LABEL_MAGIC, IDX_IMAGE_MAGIC):
        raise DataFormatError(f"{path}: bad IDX magic 0x{magic:08x}")
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise DataFormatError(f"{path}: truncated IDX dimension block")
    dims = struct.unpack(f">{ndim}I", raw[4:header])
    expected = int(np.prod(dims))
    payload = np.frombuffer(raw, dtype=np.uint8, offset=header)
    if payload.size != expected:
        raise DataFormatError(
            f"{path}: payload has {payload.size} bytes, dimensions imply {expected}"
        )
    data = payload.reshape(dims)
    if magic == IDX_LABEL_MAGIC:
        return data.astype(np.int64)
    return data.astype(np.float64) / 255.0


def write_idx(path, array: Array) -> None:
    """Inverse of load_idx: 1-d int arrays as labels, 3-d [0, 1] arrays as images."""
    array = np.asarray(array)
    if array.ndim == 1:
        magic, payload = IDX_LABEL_MAGIC, array.astype(np.uint8)
    elif array.ndim == 3:
        magic = IDX_IMAGE_MAGIC
        payload = np.clip(np.rint(array * 255.0), 0, 255).astype(np.uint8)
    else:
        raise ConfigError("write_idx expects labels (1-d) or an image stack (3-d)")
    with open(path, "wb") as fh:
        fh.write(struct.pack(">I", magic))
        fh.write(struct.pack(f">{array.ndim}I", *payload.shape))
        fh.write(payload.tobytes())


def load_image_set(images_path, labels_path) -> ImageSet:
    images = load_idx(images_path)
    labels = load_idx(labels_path)
    if images.ndim != 3:
        raise DataFormatError(f"{images_path}: expected an image file")
    if labels.ndim != 1:
        raise DataFormatError(f"{labels_path}: expected a label file")
    return ImageSet(images, labels)


# ---------------------------------------------------------------------------
# Subsampling and perturbation
# ---------------------------------------------------------------------------


def subsample(images: ImageSet, per_class: int, classes: Sequence[int], seed) -> ImageSet:
    """Seeded stratified sample of ``per_class`` images from each listed class."""
    rng = np.random.default_rng(seed)
    keep = []
    for cls in classes:
        pool = np.flatnonzero(images.labels == cls)
        if len(pool) < per_class:
            raise ConfigError(
                f"class {cls} has {len(pool)} examples, need {per_class}"
            )
        keep.append(rng.choice(pool, size=per_class, replace=False))
    idx = np.concatenate(keep)
    return ImageSet(images.images[idx].copy(), images.labels[idx].copy())


PERTURBATION_KINDS = ("gaussian_noise", "translate")
NOISE_STEP = 0.04  # per-level noise standard deviation


def perturb(images: ImageSet, kind: str, level: int, seed, noise_step: float = NOISE_STEP) -> ImageSet:
    """Apply one perturbation at integer intensity ``level`` (0 = identity).

    gaussian_noise adds N(0, (noise_step * level)^2) per pixel, clipped to
    [0, 1]; translate pads 2 * level zeros per side and crops back at a random
    offset.
    """
    if kind not in PERTURBATION_KINDS:
        raise ConfigError(f"unknown perturbation kind {kind!r}")
    if level < 0:
        raise ConfigError("level must be >= 0")
    if level == 0:
        return ImageSet(images.images.copy(), images.labels.copy())
    rng = np.random.default_rng(seed)
    if kind == "gaussian_noise":
        sigma = noise_step * level
        noisy = images.images + sigma * rng.standard_normal(images.images.shape)
        return ImageSet(np.clip(noisy, 0.0, 1.0), images.labels.copy())
    pad = 2 * level
    n, h, w = images.images.shape
    padded = np.pad(images.images, ((0, 0), (pad, pad), (pad, pad)))
    out = np.empty_like(images.images)
    for i in range(n):
        dy = rng.integers(0, 2 * pad + 1)
        dx = rng.integers(0, 2 * pad + 1)
        out[i] = padded[i, dy : dy + h, dx : dx + w]
    return ImageSet(out, images.labels.copy())


def perturbation_fn(images: ImageSet, kind: str):
    """Adapter for the prior-correlation decay diagnostics: maps raw image
    stacks through ``perturb`` at a given intensity."""

    def apply(stack: Array, level: int, seed) -> Array:
        return perturb(ImageSet(stack, images.labels), kind, level, seed).images

    return apply


# ---------------------------------------------------------------------------
# Width sweep
# ---------------------------------------------------------------------------


def width_sweep(
    base_hidden: Sequence[int],
    multipliers: Sequence[int],
    input_dim: int,
    output_dim: int,
    bias: bool = True,
) -> list:
    """Network specs with hidden sizes scaled by each multiplier (ascending)."""
    mults = [int(m) for m in multipliers]
    if any(m < 1 for m in mults):
        raise ConfigError("multipliers must be positive integers")
    if sorted(mults) != mults:
        raise ConfigError("multipliers must be ascending")
    if len(set(mults)) != len(mults):
        raise ConfigError("duplicate multipliers")
    specs = []
    for m in mults:
        hidden = tuple(m * int(h) for h in base_hidden)
        specs.append(NetworkSpec.dense((input_dim,) + hidden + (output_dim,), bias=bias))
    counts = [count_params(s) for s in specs]
    if sorted(set(counts)) != counts:
        raise ConfigError("parameter counts must be strictly increasing")
    return specs


# ---------------------------------------------------------------------------
# Offline digit images (the desk-scale stand-in for MNIST)
# ---------------------------------------------------------------------------


def digits_image_set() -> ImageSet:
    """The bundled 8x8 handwritten-digit scans, pixels scaled to [0, 1]."""
    from sklearn.datasets import load_digits

    raw = load_digits()
    return ImageSet(raw.images / 16.0, raw.target)
