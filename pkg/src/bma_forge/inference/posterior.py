"""Posterior approximation containers and the BMAF binary format.

The tagged union mirrors how each method represents p(w | D):

* ``DiracEnsemble`` -- point masses (MAP solutions, SWA points, sampler draws);
* ``FactorizedGaussian`` -- mean-field Gaussian from variational inference;
* ``SwagGaussian`` -- diagonal plus rank-K covariance built from SGD iterates;
* ``Mixture`` -- uniform mixture of the above (MultiSWAG and friends).
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import List, Union

import numpy as np

from ..errors import ConfigError, DataFormatError
from ..network import NetworkSpec, ParamVector, count_params

Array = np.ndarray


@dataclass
class DiracEnsemble:
    """Uniform collection of point masses delta(w = w_j)."""

    members: List[ParamVector]

    def __post_init__(self):
        if not self.members:
            raise ConfigError("ensemble must be nonempty")
        spec = self.members[0].spec
        if any(m.spec != spec for m in self.members):
            raise ConfigError("ensemble members disagree on the network spec")

    @property
    def spec(self) -> NetworkSpec:
        return self.members[0].spec

    def __len__(self) -> int:
        return len(self.members)


@dataclass
class FactorizedGaussian:
    """Fully factorized Gaussian q(w) = N(mean, diag(exp(2 log_std)))."""

    mean: ParamVector
    log_std: Array

    def __post_init__(self):
        self.log_std = np.asarray(self.log_std, dtype=np.float64)
        if self.log_std.shape != self.mean.values.shape:
            raise ConfigError("log_std does not match the mean vector")
        if not np.all(np.isfinite(self.mean.values)) or not np.all(np.isfinite(self.log_std)):
            raise ConfigError("factorized Gaussian entries must be finite")

    @property
    def spec(self) -> NetworkSpec:
        return self.mean.spec


@dataclass
class SwagGaussian:
    """Gaussian with covariance 0.5 diag(sigma^2) + D D^T / (2 (K - 1))."""

    mean: ParamVector
    diag_variance: Array
    deviations: Array  # (d, K), last K deviations from the running mean

    def __post_init__(self):
        self.diag_variance = np.asarray(self.diag_variance, dtype=np.float64)
        self.deviations = np.asarray(self.deviations, dtype=np.float64)
        d = self.mean.values.size
        if self.diag_variance.shape != (d,):
            raise ConfigError("diag_variance does not match the mean vector")
        if np.any(self.diag_variance < 0):
            raise ConfigError("diag_variance must be non-negative")
        if self.deviations.ndim != 2 or self.deviations.shape[0] != d:
            raise ConfigError("deviations must be a (d, K) matrix")

    @property
    def spec(self) -> NetworkSpec:
        return self.mean.spec

    @property
    def rank(self) -> int:
        return self.deviations.shape[1]

    def covariance(self) -> Array:
        """Dense covariance implied by the sampling rule (tests / small d only)."""
        k = self.rank
        return 0.5 * np.diag(self.diag_variance) + (
            self.deviations @ self.deviations.T
        ) / (2.0 * (k - 1))


@dataclass
class Mixture:
    """Uniform mixture over non-mixture components."""

    components: List["PosteriorApprox"]

    def __post_init__(self):
        if not self.components:
            raise ConfigError("mixture must be nonempty")
        if any(isinstance(c, Mixture) for c in self.components):
            raise ConfigError("mixtures must not nest beyond depth 2")
        spec = self.components[0].spec
        if any(c.spec != spec for c in self.components):
            raise ConfigError("mixture components disagree on the network spec")

    @property
    def spec(self) -> NetworkSpec:
        return self.components[0].spec


PosteriorApprox = Union[DiracEnsemble, FactorizedGaussian, SwagGaussian, Mixture]


def posterior_tag(posterior: PosteriorApprox) -> str:
    if isinstance(posterior, DiracEnsemble):
        return f"dirac_ensemble[{len(posterior)}]"
    if isinstance(posterior, FactorizedGaussian):
        return "factorized_gaussian"
    if isinstance(posterior, SwagGaussian):
        return f"swag[k={posterior.rank}]"
    if isinstance(posterior, Mixture):
        return f"mixture[{len(posterior.components)}]"
    raise ConfigError(f"unknown posterior {posterior!r}")


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------


def sample_swag(swag: SwagGaussian, seed) -> ParamVector:
    """One draw w = mean + sigma * z1 / sqrt(2) + D z2 / sqrt(2 (K - 1))."""
    return draw_swag(swag, np.random.default_rng(seed), 1)[0]


def draw_swag(swag: SwagGaussian, rng, n_draws: int) -> List[ParamVector]:
    k = swag.rank
    if k < 2:
        raise ConfigError(f"SWAG sampling needs rank >= 2, got {k}")
    sigma = np.sqrt(swag.diag_variance)
    out = []
    for _ in range(n_draws):
        z1 = rng.standard_normal(sigma.size)
        z2 = rng.standard_normal(k)
        w = (
            swag.mean.values
            + sigma * z1 / np.sqrt(2.0)
            + swag.deviations @ z2 / np.sqrt(2.0 * (k - 1))
        )
        out.append(ParamVector(w, swag.spec))
    return out


def draw_factorized(q: FactorizedGaussian, rng, n_draws: int) -> List[ParamVector]:
    std = np.exp(q.log_std)
    return [
        ParamVector(q.mean.values + std * rng.standard_normal(std.size), q.spec)
        for _ in range(n_draws)
    ]


def _total_dirac_members(posterior) -> int:
    if isinstance(posterior, DiracEnsemble):
        return len(posterior)
    if isinstance(posterior, Mixture) and all(
        isinstance(c, DiracEnsemble) for c in posterior.components
    ):
        return sum(len(c) for c in posterior.components)
    return -1


def posterior_draws(posterior: PosteriorApprox, n_draws, seed) -> List[ParamVector]:
    """Draw parameter vectors from a posterior representation.

    Dirac ensembles are enumerated, never resampled: ``n_draws`` must be None
    or equal to the member count. A mixture whose components are all Dirac and
    whose total member count equals ``n_draws`` is likewise enumerated exactly
    (uniform weights, equal counts); otherwise components are picked uniformly
    at random before sampling.
    """
    rng = np.random.default_rng(seed)
    if isinstance(posterior, DiracEnsemble):
        if n_draws is not None and n_draws != len(posterior):
            raise ConfigError(
                f"Dirac ensembles are enumerated: asked for {n_draws} draws, "
                f"have {len(posterior)} members"
            )
        return [m.copy() for m in posterior.members]
    if n_draws is None:
        raise ConfigError("n_draws is required for non-Dirac posteriors")
    if n_draws < 1:
        raise ConfigError("n_draws must be >= 1")
    if isinstance(posterior, FactorizedGaussian):
        return draw_factorized(posterior, rng, n_draws)
    if isinstance(posterior, SwagGaussian):
        return draw_swag(posterior, rng, n_draws)
    if isinstance(posterior, Mixture):
        if _total_dirac_members(posterior) == n_draws:
            out = []
            for comp in posterior.components:
                out.extend(m.copy() for m in comp.members)
            return out
        out = []
        for _ in range(n_draws):
            comp = posterior.components[rng.integers(len(posterior.components))]
            if isinstance(comp, DiracEnsemble):
                out.append(comp.members[rng.integers(len(comp))].copy())
            elif isinstance(comp, FactorizedGaussian):
                out.extend(draw_factorized(comp, rng, 1))
            else:
                out.extend(draw_swag(comp, rng, 1))
        return out
    raise ConfigError(f"unknown posterior {posterior!r}")


# ---------------------------------------------------------------------------
# BMAF container
# ---------------------------------------------------------------------------

_MAGIC = b"BMAF"
_VERSION = 1
_VARIANTS = {DiracEnsemble: 1, FactorizedGaussian: 2, SwagGaussian: 3, Mixture: 4}


def _pack_layout(spec: NetworkSpec) -> bytes:
    parts = [struct.pack("<I", len(spec.layer_sizes))]
    parts.append(struct.pack(f"<{len(spec.layer_sizes)}I", *spec.layer_sizes))
    parts.append(struct.pack(f"<{spec.n_layers}B", *(1 if b else 0 for b in spec.use_bias)))
    return b"".join(parts)


def _array_bytes(a: Array) -> bytes:
    return np.ascontiguousarray(a, dtype="<f8").tobytes()


def _pack_record(posterior: PosteriorApprox) -> bytes:
    tag = _VARIANTS[type(posterior)]
    spec = posterior.spec
    parts = [struct.pack("<B", tag), _pack_layout(spec)]
    if isinstance(posterior, DiracEnsemble):
        parts.append(struct.pack("<I", len(posterior)))
        parts.extend(_array_bytes(m.values) for m in posterior.members)
    elif isinstance(posterior, FactorizedGaussian):
        parts.append(_array_bytes(posterior.mean.values))
        parts.append(_array_bytes(posterior.log_std))
    elif isinstance(posterior, SwagGaussian):
        parts.append(struct.pack("<I", posterior.rank))
        parts.append(_array_bytes(posterior.mean.values))
        parts.append(_array_bytes(posterior.diag_variance))
        parts.append(_array_bytes(posterior.deviations.T))  # column after column
    else:
        parts.append(struct.pack("<I", len(posterior.components)))
        parts.extend(_pack_record(c) for c in posterior.components)
    return b"".join(parts)


def save_posterior(path, posterior: PosteriorApprox) -> None:
    """Write the documented BMAF container: magic, version, then one record."""
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", _VERSION))
        fh.write(_pack_record(posterior))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise DataFormatError("truncated BMAF payload")
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def u8(self) -> int:
        return struct.unpack("<B", self.take(1))[0]

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def f64(self, n: int) -> Array:
        return np.frombuffer(self.take(8 * n), dtype="<f8").astype(np.float64)


def _unpack_layout(reader: _Reader) -> NetworkSpec:
    n_sizes = reader.u32()
    if n_sizes < 2 or n_sizes > 10_000:
        raise DataFormatError(f"implausible layer count {n_sizes}")
    sizes = struct.unpack(f"<{n_sizes}I", reader.take(4 * n_sizes))
    flags = struct.unpack(f"<{n_sizes - 1}B", reader.take(n_sizes - 1))
    return NetworkSpec(tuple(sizes), tuple(bool(f) for f in flags))


def _unpack_record(reader: _Reader) -> PosteriorApprox:
    tag = reader.u8()
    if tag == 4:
        # mixture: component records carry their own layouts
        count_pos_spec = _unpack_layout(reader)
        n = reader.u32()
        comps = [_unpack_record(reader) for _ in range(n)]
        del count_pos_spec
        return Mixture(comps)
    spec = None
    if tag in (1, 2, 3):
        spec = _unpack_layout(reader)
        d = count_params(spec)
    else:
        raise DataFormatError(f"unknown BMAF variant tag {tag}")
    if tag == 1:
        n = reader.u32()
        members = [ParamVector(reader.f64(d), spec) for _ in range(n)]
        return DiracEnsemble(members)
    if tag == 2:
        mean = ParamVector(reader.f64(d), spec)
        return FactorizedGaussian(mean, reader.f64(d))
    k = reader.u32()
    mean = ParamVector(reader.f64(d), spec)
    diag = reader.f64(d)
    dev = reader.f64(d * k).reshape(k, d).T
    return SwagGaussian(mean, diag, dev)


def load_posterior(path) -> PosteriorApprox:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != _MAGIC:
        raise DataFormatError(f"bad magic {data[:4]!r}, expected {_MAGIC!r}")
    reader = _Reader(data)
    reader.take(4)
    version = reader.u32()
    if version != _VERSION:
        raise DataFormatError(f"unsupported BMAF version {version}")
    posterior = _unpack_record(reader)
    if reader.pos != len(data):
        raise DataFormatError("trailing bytes after BMAF record")
    return posterior
