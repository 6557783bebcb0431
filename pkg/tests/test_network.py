"""Tests for the dense-network core: forward pass, likelihoods, gradients."""

import numpy as np
import pytest

from bma_forge import (
    Categorical,
    ConfigError,
    GaussianRegression,
    NetworkSpec,
    NumericalError,
    ParamVector,
    PriorSpec,
    TemperedLikelihood,
    Temperature,
    count_params,
    forward,
    loss_and_grad,
)
from bma_forge.network import data_nll
from bma_forge.priors import sample_params


class TestNetworkSpec:
    def test_validation(self):
        with pytest.raises(ConfigError):
            NetworkSpec.dense([3])
        with pytest.raises(ConfigError):
            NetworkSpec.dense([3, 0, 1])
        with pytest.raises(ConfigError, match="bias flag"):
            NetworkSpec((2, 3), (True, True))

    def test_count_params_examples(self):
        assert count_params(NetworkSpec.dense([1, 1])) == 2
        assert count_params(NetworkSpec.dense([2, 10, 10, 10, 1])) == 261
        assert count_params(NetworkSpec.dense([3, 4], bias=False)) == 12

    def test_count_matches_layout(self):
        spec = NetworkSpec((5, 7, 3), (True, False))
        p = ParamVector.zeros(spec)
        covered = sum(
            (s.weight.stop - s.weight.start)
            + (s.bias.stop - s.bias.start if s.bias else 0)
            for s in p.layout
        )
        assert covered == count_params(spec) == p.values.size
        # layout slices are contiguous and non-overlapping
        stops = [p.layout[0].weight.start] + [
            (s.bias or s.weight).stop for s in p.layout
        ]
        starts = [s.weight.start for s in p.layout] + [p.values.size]
        assert stops == starts


class TestForward:
    def test_zero_params_zero_outputs(self):
        spec = NetworkSpec.dense([3, 5, 2])
        x = np.random.default_rng(0).normal(size=(4, 3))
        out = forward(spec, ParamVector.zeros(spec), x)
        assert np.all(out == 0.0)

    def test_single_linear_layer_hand_arithmetic(self):
        # w = [[2]], b = [1], x = 3 -> 7
        spec = NetworkSpec.dense([1, 1])
        params = ParamVector(np.array([2.0, 1.0]), spec)
        out = forward(spec, params, np.array([[3.0]]))
        assert out.item() == 7.0

    def test_relu_scaling_two_layer(self):
        # bias-free 2-layer net: scaling layer 1 by 2 and layer 2 by 3 scales
        # outputs by exactly 6
        spec = NetworkSpec.dense([2, 6, 1], bias=False)
        rng = np.random.default_rng(3)
        base = ParamVector(rng.normal(size=count_params(spec)), spec)
        scaled = base.copy()
        w0, _ = scaled.layer(0)
        w1, _ = scaled.layer(1)
        w0 *= 2.0
        w1 *= 3.0
        x = rng.normal(size=(10, 2))
        np.testing.assert_allclose(
            forward(spec, scaled, x), 6.0 * forward(spec, base, x), rtol=1e-12
        )

    def test_determinism(self):
        spec = NetworkSpec.dense([4, 8, 3])
        prior = PriorSpec.isotropic(2, 1.0)
        params = sample_params(spec, prior, seed=11)
        x = np.random.default_rng(5).normal(size=(6, 4))
        a = forward(spec, params, x)
        b = forward(spec, params, x)
        assert np.array_equal(a, b)

    def test_dimension_mismatch(self):
        spec = NetworkSpec.dense([3, 2])
        with pytest.raises(ConfigError, match="input dim"):
            forward(spec, ParamVector.zeros(spec), np.ones((4, 5)))
        other = NetworkSpec.dense([2, 3])
        with pytest.raises(ConfigError, match="different spec"):
            loss_and_grad(
                NetworkSpec.dense([3, 2]),
                ParamVector.zeros(other),
                np.ones((1, 3)),
                np.zeros(1),
                GaussianRegression(1.0),
                PriorSpec.isotropic(1, 1.0),
            )


def _finite_difference(spec, params, x, y, lik, prior, temp, h=1e-5):
    grad = np.zeros_like(params.values)
    for i in range(params.values.size):
        up, dn = params.copy(), params.copy()
        up.values[i] += h
        dn.values[i] -= h
        lu, _ = loss_and_grad(spec, up, x, y, lik, prior, temp)
        ld, _ = loss_and_grad(spec, dn, x, y, lik, prior, temp)
        grad[i] = (lu - ld) / (2.0 * h)
    return grad


class TestLossAndGrad:
    def test_identity_temperature(self):
        spec = NetworkSpec.dense([2, 4, 1])
        prior = PriorSpec.isotropic(2, 1.0)
        params = sample_params(spec, prior, seed=0)
        x = np.random.default_rng(1).normal(size=(5, 2))
        y = np.zeros(5)
        lik = GaussianRegression(0.5)
        l1, g1 = loss_and_grad(spec, params, x, y, lik, prior, Temperature(1.0))
        l2, g2 = loss_and_grad(spec, params, x, y, lik, prior)
        assert l1 == l2
        assert np.array_equal(g1.values, g2.values)

    def test_zero_residual_data_term(self):
        # one point with f(x; w) = y: the data term is 0.5 log(2 pi sigma^2)
        spec = NetworkSpec.dense([1, 1])
        params = ParamVector(np.array([2.0, 1.0]), spec)
        prior = PriorSpec.isotropic(1, 1.0)
        sigma2 = 0.3
        lik = GaussianRegression(sigma2)
        x = np.array([[3.0]])
        y = np.array([7.0])
        loss, _ = loss_and_grad(spec, params, x, y, lik, prior)
        from bma_forge.priors import log_prior_density

        data_term = loss + log_prior_density(prior, params)
        assert np.isclose(data_term, 0.5 * np.log(2 * np.pi * sigma2), atol=1e-12)

    @pytest.mark.parametrize("temp", [0.5, 1.0, 2.0])
    @pytest.mark.parametrize("lik_kind", ["gaussian", "categorical"])
    def test_gradient_matches_finite_differences(self, temp, lik_kind):
        rng = np.random.default_rng(hash((temp, lik_kind)) % (1 << 31))
        spec = NetworkSpec.dense([3, 6, 5, 3])
        prior = PriorSpec.isotropic(3, 0.8)
        x = rng.normal(size=(8, 3))
        if lik_kind == "gaussian":
            spec = NetworkSpec.dense([3, 6, 5, 1])
            lik = GaussianRegression(0.25)
            y = rng.normal(size=8)
        else:
            lik = Categorical(3)
            y = rng.integers(0, 3, size=8)
        for draw in range(3):
            params = sample_params(spec, prior, seed=100 + draw)
            _, grad = loss_and_grad(spec, params, x, y, lik, prior, Temperature(temp))
            num = _finite_difference(spec, params, x, y, lik, prior, Temperature(temp))
            rel = np.linalg.norm(num - grad.values) / np.linalg.norm(num)
            assert rel < 1e-5

    def test_temperature_linearity(self):
        # loss(T) = data_term / T + prior_term: recover both terms from T in {1, 2}
        spec = NetworkSpec.dense([2, 5, 1])
        prior = PriorSpec.isotropic(2, 1.2)
        params = sample_params(spec, prior, seed=4)
        x = np.random.default_rng(9).normal(size=(7, 2))
        y = np.random.default_rng(10).normal(size=7)
        lik = GaussianRegression(0.4)
        l1, _ = loss_and_grad(spec, params, x, y, lik, prior, Temperature(1.0))
        l2, _ = loss_and_grad(spec, params, x, y, lik, prior, Temperature(2.0))
        data_term = 2.0 * (l1 - l2)
        prior_term = l1 - data_term
        lhalf, _ = loss_and_grad(spec, params, x, y, lik, prior, Temperature(0.5))
        assert np.isclose(lhalf, 2.0 * data_term + prior_term, rtol=1e-12)

    def test_tempering_equals_power_likelihood(self):
        spec = NetworkSpec.dense([2, 4, 3])
        prior = PriorSpec.isotropic(2, 1.0)
        params = sample_params(spec, prior, seed=2)
        x = np.random.default_rng(3).normal(size=(6, 2))
        y = np.random.default_rng(4).integers(0, 3, size=6)
        lik = Categorical(3)
        for t in (0.5, 2.0, 7.3):
            l1, g1 = loss_and_grad(spec, params, x, y, lik, prior, Temperature(t))
            l2, g2 = loss_and_grad(
                spec, params, x, y, TemperedLikelihood(lik, 1.0 / t), prior
            )
            assert l1 == l2
            assert np.array_equal(g1.values, g2.values)

    def test_empty_batch_rejected(self):
        spec = NetworkSpec.dense([2, 1])
        prior = PriorSpec.isotropic(1, 1.0)
        with pytest.raises(ConfigError, match="nonempty"):
            loss_and_grad(
                spec,
                ParamVector.zeros(spec),
                np.empty((0, 2)),
                np.empty(0),
                GaussianRegression(1.0),
                prior,
            )

    def test_overflow_is_reported(self):
        spec = NetworkSpec.dense([1, 1], bias=False)
        params = ParamVector(np.array([1e200]), spec)
        prior = PriorSpec.isotropic(1, 1.0)
        with np.errstate(over="ignore"):
            with pytest.raises(NumericalError, match="non-finite"):
                loss_and_grad(
                    spec,
                    params,
                    np.array([[1e200]]),
                    np.array([0.0]),
                    GaussianRegression(1.0),
                    prior,
                )


class TestLikelihoods:
    def test_gaussian_requires_output_dim_1(self):
        spec = NetworkSpec.dense([2, 3])
        params = ParamVector.zeros(spec)
        with pytest.raises(ConfigError, match="dim"):
            loss_and_grad(
                spec,
                params,
                np.ones((2, 2)),
                np.zeros(2),
                GaussianRegression(1.0),
                PriorSpec.isotropic(1, 1.0),
            )

    def test_categorical_label_range(self):
        out = np.zeros((2, 3))
        with pytest.raises(ConfigError, match="out of range"):
            data_nll(Categorical(3), out, np.array([0, 3]))

    def test_invalid_hyperparameters(self):
        with pytest.raises(ConfigError):
            GaussianRegression(0.0)
        with pytest.raises(ConfigError):
            Categorical(1)
        with pytest.raises(ConfigError):
            Temperature(0.0)

    def test_uniform_categorical_nll(self):
        out = np.zeros((4, 10))
        y = np.arange(4) % 10
        assert np.isclose(data_nll(Categorical(10), out, y), 4 * np.log(10.0))
