"""Tests for posterior containers, SWAG sampling, and the BMAF container."""

import numpy as np
import pytest

from bma_forge import ConfigError, NetworkSpec, ParamVector, PriorSpec
from bma_forge.errors import DataFormatError
from bma_forge.inference import (
    DiracEnsemble,
    FactorizedGaussian,
    Mixture,
    SwagGaussian,
    draw_swag,
    load_posterior,
    posterior_draws,
    sample_swag,
    save_posterior,
)
from bma_forge.priors import sample_params

SPEC = NetworkSpec.dense([2, 3, 1])
DIM = 13


def _params(seed):
    return sample_params(SPEC, PriorSpec.isotropic(2, 1.0), seed=seed)


def _swag(rank=4, seed=0, zero=False):
    rng = np.random.default_rng(seed)
    mean = _params(seed)
    if zero:
        return SwagGaussian(mean, np.zeros(DIM), np.zeros((DIM, rank)))
    return SwagGaussian(mean, rng.uniform(0.1, 0.5, DIM), rng.normal(size=(DIM, rank)))


class TestContainers:
    def test_empty_ensemble_rejected(self):
        with pytest.raises(ConfigError, match="nonempty"):
            DiracEnsemble([])

    def test_mixture_depth_limit(self):
        inner = Mixture([DiracEnsemble([_params(0)])])
        with pytest.raises(ConfigError, match="nest"):
            Mixture([inner])

    def test_swag_validation(self):
        with pytest.raises(ConfigError, match="non-negative"):
            SwagGaussian(_params(0), -np.ones(DIM), np.zeros((DIM, 2)))


class TestSwagSampling:
    def test_degenerate_swag_returns_mean(self):
        swag = _swag(zero=True)
        sample = sample_swag(swag, seed=1)
        np.testing.assert_array_equal(sample.values, swag.mean.values)

    def test_rank_below_two_rejected(self):
        swag = SwagGaussian(_params(0), np.ones(DIM), np.ones((DIM, 1)))
        with pytest.raises(ConfigError, match="rank"):
            sample_swag(swag, seed=0)

    def test_seeded_reproducibility(self):
        swag = _swag()
        a = sample_swag(swag, seed=5)
        b = sample_swag(swag, seed=5)
        assert np.array_equal(a.values, b.values)

    def test_sampler_covariance_matches_construction(self):
        # empirical covariance of many draws vs 0.5 diag + D D^T / (2 (K-1))
        swag = _swag(rank=3, seed=2)
        rng = np.random.default_rng(0)
        draws = np.stack([p.values for p in draw_swag(swag, rng, 20_000)])
        emp = np.cov(draws.T)
        expected = swag.covariance()
        n = draws.shape[0]
        for i in range(DIM):
            for j in range(DIM):
                se = np.sqrt((expected[i, i] * expected[j, j] + expected[i, j] ** 2) / n)
                assert abs(emp[i, j] - expected[i, j]) < 4 * se


class TestPosteriorDraws:
    def test_dirac_is_enumerated(self):
        ensemble = DiracEnsemble([_params(i) for i in range(3)])
        draws = posterior_draws(ensemble, 3, seed=0)
        for drawn, member in zip(draws, ensemble.members):
            np.testing.assert_array_equal(drawn.values, member.values)
        with pytest.raises(ConfigError, match="enumerated"):
            posterior_draws(ensemble, 5, seed=0)

    def test_mixture_of_diracs_enumerates_exactly(self):
        a, b = _params(0), _params(1)
        mix = Mixture([DiracEnsemble([a]), DiracEnsemble([b])])
        draws = posterior_draws(mix, 2, seed=0)
        np.testing.assert_array_equal(draws[0].values, a.values)
        np.testing.assert_array_equal(draws[1].values, b.values)

    def test_mixture_random_composition_is_roughly_uniform(self):
        a, b = _params(0), _params(1)
        mix = Mixture([DiracEnsemble([a]), DiracEnsemble([b])])
        draws = posterior_draws(mix, 501, seed=3)
        frac_a = np.mean([np.array_equal(d.values, a.values) for d in draws])
        assert 0.4 < frac_a < 0.6

    def test_factorized_draws(self):
        q = FactorizedGaussian(_params(4), np.full(DIM, -1.0))
        draws = posterior_draws(q, 4000, seed=1)
        stack = np.stack([d.values for d in draws])
        np.testing.assert_allclose(stack.mean(axis=0), q.mean.values, atol=0.05)
        np.testing.assert_allclose(stack.std(axis=0), np.exp(-1.0), atol=0.05)


class TestBmafContainer:
    @pytest.mark.parametrize("case", ["dirac", "factorized", "swag", "mixture"])
    def test_round_trip(self, case, tmp_path):
        if case == "dirac":
            posterior = DiracEnsemble([_params(i) for i in range(3)])
        elif case == "factorized":
            posterior = FactorizedGaussian(_params(0), np.linspace(-2, 0, DIM))
        elif case == "swag":
            posterior = _swag(rank=4, seed=7)
        else:
            posterior = Mixture([_swag(rank=3, seed=1), _swag(rank=3, seed=2)])
        path = tmp_path / "posterior.bmaf"
        save_posterior(path, posterior)
        loaded = load_posterior(path)
        assert type(loaded) is type(posterior)
        if case == "dirac":
            for a, b in zip(loaded.members, posterior.members):
                np.testing.assert_array_equal(a.values, b.values)
                assert a.spec == SPEC
        elif case == "factorized":
            np.testing.assert_array_equal(loaded.mean.values, posterior.mean.values)
            np.testing.assert_array_equal(loaded.log_std, posterior.log_std)
        elif case == "swag":
            np.testing.assert_array_equal(loaded.deviations, posterior.deviations)
            np.testing.assert_array_equal(loaded.diag_variance, posterior.diag_variance)
        else:
            assert len(loaded.components) == 2
            np.testing.assert_array_equal(
                loaded.components[1].mean.values, posterior.components[1].mean.values
            )

    def test_magic_check(self, tmp_path):
        path = tmp_path / "bad.bmaf"
        path.write_bytes(b"NOPE" + b"\x00" * 16)
        with pytest.raises(DataFormatError, match="magic"):
            load_posterior(path)

    def test_truncation_check(self, tmp_path):
        path = tmp_path / "posterior.bmaf"
        save_posterior(path, DiracEnsemble([_params(0)]))
        data = path.read_bytes()
        path.write_bytes(data[:-8])
        with pytest.raises(DataFormatError, match="truncated"):
            load_posterior(path)
