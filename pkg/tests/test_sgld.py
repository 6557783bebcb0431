"""Tests for stochastic gradient Langevin dynamics."""

import numpy as np
import pytest

from bma_forge import ConfigError, NetworkSpec, ParamVector, PriorSpec
from bma_forge.inference import TrainConfig, run_sgld


class TestRunSgld:
    def test_requires_cosine_schedule(self):
        spec = NetworkSpec.dense([1, 1], bias=False)
        prior = PriorSpec.isotropic(1, 1.0)
        config = TrainConfig(epochs=5, batch_size=1, learning_rate=0.1)
        with pytest.raises(ConfigError, match="cosine"):
            run_sgld(spec, None, None, prior, config, n_samples=1)

    def test_vanishing_step_leaves_params_unchanged(self):
        # eta -> 0 limit: both the drift and the noise term vanish
        spec = NetworkSpec.dense([1, 1], bias=False)
        prior = PriorSpec.isotropic(1, 1.0)
        config = TrainConfig(
            epochs=10, batch_size=1, learning_rate=1e-300, schedule="cosine"
        )
        init = ParamVector(np.array([0.75]), spec)
        ens = run_sgld(spec, None, None, prior, config, n_samples=2, init=init)
        for member in ens.members:
            assert member.values[0] == 0.75

    def test_gaussian_target_moments(self):
        # prior-only 1-d standard Gaussian: restart samples match the moments
        spec = NetworkSpec.dense([1, 1], bias=False)
        prior = PriorSpec.isotropic(1, 1.0)
        config = TrainConfig(
            epochs=150, batch_size=1, learning_rate=0.8, schedule="cosine", seed=0
        )
        n = 500
        ens = run_sgld(spec, None, None, prior, config, n_samples=n, seed=3)
        values = np.array([m.values[0] for m in ens.members])
        assert abs(values.mean()) < 3.0 / np.sqrt(n)
        assert abs(values.var() - 1.0) < 3.0 * np.sqrt(2.0 / n)

    def test_restarts_are_independent_and_seeded(self):
        spec = NetworkSpec.dense([2, 1], bias=False)
        prior = PriorSpec.isotropic(1, 1.0)
        config = TrainConfig(
            epochs=20, batch_size=1, learning_rate=0.5, schedule="cosine", seed=0
        )
        a = run_sgld(spec, None, None, prior, config, n_samples=3, seed=9)
        b = run_sgld(spec, None, None, prior, config, n_samples=3, seed=9)
        for ma, mb in zip(a.members, b.members):
            assert np.array_equal(ma.values, mb.values)
        assert not np.array_equal(a.members[0].values, a.members[1].values)
