"""Multi-basin posterior approximations: deep ensembles, MultiSWA, MultiSWAG.

Members are trained independently with seeds ``base_seed + index``, so runs
can fan out across workers and still merge deterministically.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from ..errors import ConfigError
from ..network import LikelihoodSpec, NetworkSpec, ParamVector
from ..parallel import ordered_map
from ..priors import PriorSpec
from .posterior import DiracEnsemble, Mixture, SwagGaussian, draw_swag
from .training import TrainConfig, fit_swag, train_map, train_swa, with_seed


def member_seeds(config: TrainConfig, count: int, seeds: Optional[Sequence[int]]) -> List[int]:
    if seeds is not None:
        seeds = [int(s) for s in seeds]
        if len(seeds) != count:
            raise ConfigError(f"need {count} seeds, got {len(seeds)}")
        return seeds
    return [config.seed + j for j in range(count)]


def _map_member(args):
    kind, spec, data, likelihood, prior, config, extra = args
    if kind == "map":
        return train_map(spec, data, likelihood, prior, config)
    if kind == "swa":
        return train_swa(spec, data, likelihood, prior, config, collect_start=extra)
    collect_start, rank = extra
    return fit_swag(spec, data, likelihood, prior, config, collect_start, rank)


def deep_ensemble(
    spec: NetworkSpec,
    data,
    likelihood: LikelihoodSpec,
    prior: PriorSpec,
    config: TrainConfig,
    n_members: int,
    seeds: Optional[Sequence[int]] = None,
) -> DiracEnsemble:
    """Independent MAP solutions under distinct seeds, as a Dirac ensemble."""
    if n_members < 1:
        raise ConfigError("n_members must be >= 1")
    jobs = [
        ("map", spec, data, likelihood, prior, with_seed(config, s), None)
        for s in member_seeds(config, n_members, seeds)
    ]
    return DiracEnsemble(ordered_map(_map_member, jobs))


def multi_swa(
    spec: NetworkSpec,
    data,
    likelihood: LikelihoodSpec,
    prior: PriorSpec,
    config: TrainConfig,
    n_models: int,
    collect_start: int,
    seeds: Optional[Sequence[int]] = None,
) -> DiracEnsemble:
    """Independently trained SWA solutions (the SWAG means), same train budget
    as a deep ensemble."""
    if n_models < 1:
        raise ConfigError("n_models must be >= 1")
    jobs = [
        ("swa", spec, data, likelihood, prior, with_seed(config, s), collect_start)
        for s in member_seeds(config, n_models, seeds)
    ]
    return DiracEnsemble(ordered_map(_map_member, jobs))


@dataclass
class MultiSwagResult:
    """Uniform SWAG mixture plus the parameter draws used for prediction."""

    mixture: Mixture
    samples: DiracEnsemble
    swags: List[SwagGaussian]


def multi_swag(
    spec: NetworkSpec,
    data,
    likelihood: LikelihoodSpec,
    prior: PriorSpec,
    config: TrainConfig,
    n_models: int,
    collect_start: int,
    samples_per: int = 20,
    rank: int = 20,
    seeds: Optional[Sequence[int]] = None,
) -> MultiSwagResult:
    """Mixture of independently trained SWAG Gaussians with ``samples_per``
    draws from each; no extra training epochs beyond the deep-ensemble budget."""
    if n_models < 1:
        raise ConfigError("n_models must be >= 1")
    if samples_per < 1:
        raise ConfigError("samples_per must be >= 1")
    chosen = member_seeds(config, n_models, seeds)
    jobs = [
        ("swag", spec, data, likelihood, prior, with_seed(config, s), (collect_start, rank))
        for s in chosen
    ]
    swags = ordered_map(_map_member, jobs)
    members: List[ParamVector] = []
    for s, swag in zip(chosen, swags):
        rng = np.random.default_rng((s, 1))
        members.extend(draw_swag(swag, rng, samples_per))
    return MultiSwagResult(Mixture(list(swags)), DiracEnsemble(members), swags)
