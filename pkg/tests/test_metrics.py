"""Tests for the model-average predictive and its evaluation metrics."""

import itertools

import numpy as np
import pytest
from scipy import stats

from bma_forge import (
    Categorical,
    ConfigError,
    GaussianRegression,
    NetworkSpec,
    ParamVector,
    PriorSpec,
)
from bma_forge.inference import DiracEnsemble, Mixture
from bma_forge.metrics import (
    PredictiveSamples,
    accuracy,
    ece,
    nll,
    predictive_band,
    predictive_samples,
    wasserstein1,
    wasserstein1_predictive,
)
from bma_forge.priors import sample_params

SPEC = NetworkSpec.dense([2, 4, 1])
LIK = GaussianRegression(0.04)


def _member(seed):
    return sample_params(SPEC, PriorSpec.isotropic(2, 1.0), seed=seed)


def _regression_pred(values, noise=0.04, x=None):
    values = np.asarray(values, dtype=np.float64)
    if x is None:
        x = np.arange(values.shape[1], dtype=np.float64)[:, None]
    return PredictiveSamples(x, values, "regression", "test", noise)


class TestPredictiveSamples:
    def test_single_dirac_equals_forward_pass(self):
        from bma_forge.network import forward

        member = _member(0)
        x = np.random.default_rng(0).normal(size=(6, 2))
        pred = predictive_samples(SPEC, DiracEnsemble([member]), x, None, 0, LIK)
        np.testing.assert_array_equal(pred.values[0], forward(SPEC, member, x)[:, 0])
        assert pred.n_draws == 1

    def test_mixture_of_two_diracs_enumerates(self):
        a, b = _member(1), _member(2)
        x = np.random.default_rng(1).normal(size=(4, 2))
        mix = Mixture([DiracEnsemble([a]), DiracEnsemble([b])])
        pred = predictive_samples(SPEC, mix, x, 2, 0, LIK)
        from bma_forge.network import forward

        np.testing.assert_array_equal(pred.values[0], forward(SPEC, a, x)[:, 0])
        np.testing.assert_array_equal(pred.values[1], forward(SPEC, b, x)[:, 0])

    def test_ensemble_mean_equals_member_average(self):
        members = [_member(i) for i in range(5)]
        x = np.random.default_rng(2).normal(size=(8, 2))
        pred = predictive_samples(SPEC, DiracEnsemble(members), x, None, 0, LIK)
        from bma_forge.network import forward

        direct = np.mean([forward(SPEC, m, x)[:, 0] for m in members], axis=0)
        np.testing.assert_allclose(pred.values.mean(axis=0), direct, atol=1e-12)

    def test_classification_probabilities_normalized(self):
        spec = NetworkSpec.dense([2, 5, 3])
        members = [sample_params(spec, PriorSpec.isotropic(2, 1.0), seed=i) for i in range(3)]
        x = np.random.default_rng(3).normal(size=(5, 2))
        pred = predictive_samples(spec, DiracEnsemble(members), x, None, 0, Categorical(3))
        np.testing.assert_allclose(pred.values.sum(axis=-1), 1.0, atol=1e-9)


class TestNll:
    def test_one_hot_correct_is_zero(self):
        probs = np.zeros((1, 3, 4))
        probs[0, :, 1] = 1.0
        pred = PredictiveSamples(np.zeros((3, 1)), probs, "classification", "t")
        assert nll(pred, np.array([1, 1, 1])) < 1.2e-11

    def test_uniform_ten_class(self):
        probs = np.full((2, 5, 10), 0.1)
        pred = PredictiveSamples(np.zeros((5, 1)), probs, "classification", "t")
        assert np.isclose(nll(pred, np.zeros(5, dtype=int)), np.log(10.0), atol=1e-12)

    def test_two_component_gaussian_mixture_hand_value(self):
        # predictive = 0.5 N(0, 0.04) + 0.5 N(1, 0.04) evaluated at y = 0.5
        pred = _regression_pred([[0.0], [1.0]])
        y = np.array([0.5])
        density = 0.5 * (
            stats.norm.pdf(0.5, 0.0, 0.2) + stats.norm.pdf(0.5, 1.0, 0.2)
        )
        assert np.isclose(nll(pred, y), -np.log(density), atol=1e-12)

    def test_zero_mass_is_clamped_and_flagged(self):
        probs = np.zeros((1, 1, 2))
        probs[0, 0, 0] = 1.0
        pred = PredictiveSamples(np.zeros((1, 1)), probs, "classification", "t")
        with pytest.warns(UserWarning, match="clamped"):
            value = nll(pred, np.array([1]))
        assert np.isclose(value, -np.log(1e-12))


class TestAccuracyAndEce:
    def _pred(self, probs):
        probs = np.asarray(probs, dtype=np.float64)[None, :, :]
        return PredictiveSamples(np.zeros((probs.shape[1], 1)), probs, "classification", "t")

    def test_perfect_accuracy(self):
        pred = self._pred([[0.0, 1.0], [1.0, 0.0]])
        assert accuracy(pred, np.array([1, 0])) == 1.0

    def test_adversarial_labels(self):
        pred = self._pred([[0.0, 1.0], [1.0, 0.0]])
        assert accuracy(pred, np.array([0, 1])) == 0.0

    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(0)
        raw = rng.uniform(size=(1, 50, 4))
        probs = raw / raw.sum(axis=-1, keepdims=True)
        labels = rng.integers(0, 4, size=50)
        pred = PredictiveSamples(np.zeros((50, 1)), probs, "classification", "t")
        correct = sum(
            1 for i in range(50) if int(np.argmax(probs[0, i])) == labels[i]
        )
        assert accuracy(pred, labels) == correct / 50

    def test_tie_breaks_to_lowest_class(self):
        pred = self._pred([[0.5, 0.5]])
        assert accuracy(pred, np.array([0])) == 1.0
        assert accuracy(pred, np.array([1])) == 0.0

    def test_ece_hand_example(self):
        # two points at confidence 0.9, one correct: single bin, |0.5 - 0.9|
        pred = self._pred([[0.9, 0.1], [0.9, 0.1]])
        assert np.isclose(ece(pred, np.array([0, 1]), n_bins=10), 0.4, atol=1e-12)

    def test_ece_single_bin_equals_global_gap(self):
        rng = np.random.default_rng(1)
        raw = rng.uniform(size=(1, 30, 3))
        probs = raw / raw.sum(axis=-1, keepdims=True)
        labels = rng.integers(0, 3, size=30)
        pred = PredictiveSamples(np.zeros((30, 1)), probs, "classification", "t")
        conf = probs[0].max(axis=1)
        acc = accuracy(pred, labels)
        assert np.isclose(ece(pred, labels, n_bins=1), abs(acc - conf.mean()), atol=1e-12)

    def test_perfectly_calibrated_one_hot(self):
        pred = self._pred([[1.0, 0.0], [0.0, 1.0]])
        assert ece(pred, np.array([0, 1]), n_bins=10) == 0.0

    def test_argmax_invariant_to_logit_scaling(self):
        from bma_forge.network import softmax

        rng = np.random.default_rng(2)
        logits = rng.normal(size=(20, 3))
        labels = rng.integers(0, 3, size=20)
        base = PredictiveSamples(
            np.zeros((20, 1)), softmax(logits)[None], "classification", "t"
        )
        scaled = PredictiveSamples(
            np.zeros((20, 1)), softmax(4.0 * logits)[None], "classification", "t"
        )
        assert accuracy(base, labels) == accuracy(scaled, labels)
        assert nll(base, labels) != nll(scaled, labels)


def brute_force_w1(u, v):
    """Optimal-assignment oracle for equal-size empirical distributions."""
    best = np.inf
    for perm in itertools.permutations(range(len(v))):
        cost = np.mean([abs(u[i] - v[p]) for i, p in enumerate(perm)])
        best = min(best, cost)
    return best


class TestWasserstein:
    def test_identical_sets_are_zero(self):
        u = np.random.default_rng(0).normal(size=20)
        assert wasserstein1(u, u.copy()) == 0.0

    def test_point_masses(self):
        assert wasserstein1(np.array([2.0]), np.array([5.0])) == 3.0

    def test_matches_brute_force_assignment(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            u = rng.normal(size=5)
            v = rng.normal(size=5)
            assert abs(wasserstein1(u, v) - brute_force_w1(u, v)) < 1e-9

    def test_unequal_sizes_match_scipy(self):
        rng = np.random.default_rng(2)
        for _ in range(25):
            u = rng.normal(size=int(rng.integers(2, 30)))
            v = rng.normal(size=int(rng.integers(2, 30)))
            assert np.isclose(
                wasserstein1(u, v), stats.wasserstein_distance(u, v), atol=1e-12
            )

    def test_metric_axioms_on_random_triples(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            u, v, w = (rng.normal(size=8) for _ in range(3))
            duv = wasserstein1(u, v)
            assert np.isclose(duv, wasserstein1(v, u), atol=1e-12)
            assert duv <= wasserstein1(u, w) + wasserstein1(w, v) + 1e-9
            assert duv >= 0.0

    def test_predictive_curve_and_grid_check(self):
        a = _regression_pred(np.array([[0.0, 1.0], [2.0, 3.0]]))
        b = _regression_pred(np.array([[1.0, 1.0], [3.0, 3.0]]))
        curve = wasserstein1_predictive(a, b)
        np.testing.assert_allclose(curve.per_location, [1.0, 0.0])
        assert curve.mean == 0.5
        c = _regression_pred(np.array([[0.0], [1.0]]), x=np.array([[9.0]]))
        with pytest.raises(ConfigError, match="grid"):
            wasserstein1_predictive(a, c)


class TestPredictiveBand:
    def test_single_dirac_zero_width_without_noise(self):
        pred = _regression_pred([[1.5, -0.5]])
        band = predictive_band(pred, k_sigma=3.0, include_noise=False)
        np.testing.assert_array_equal(band.lower, band.upper)

    def test_total_variance_formula(self):
        values = np.array([[0.0, 1.0], [2.0, 3.0], [4.0, -1.0]])
        noise = 0.09
        pred = _regression_pred(values, noise=noise)
        band = predictive_band(pred, k_sigma=2.0)
        total_sd = np.sqrt(values.var(axis=0) + noise)
        np.testing.assert_allclose(band.upper - band.mean, 2.0 * total_sd, atol=1e-12)

    def test_symmetric_quantile_band(self):
        pred = _regression_pred(np.array([[-1.0], [1.0]]))
        band = predictive_band(pred, quantiles=(0.25, 0.75))
        assert band.lower[0] == -1.0 and band.upper[0] == 1.0

    def test_exactly_one_mode_required(self):
        pred = _regression_pred([[0.0]])
        with pytest.raises(ConfigError, match="exactly one"):
            predictive_band(pred)
        with pytest.raises(ConfigError, match="exactly one"):
            predictive_band(pred, k_sigma=1.0, quantiles=(0.1, 0.9))


class TestJensenProperty:
    def test_ensemble_nll_below_mean_member_nll(self):
        # mixture in probability space: NLL(mixture) <= mean member NLL
        rng = np.random.default_rng(5)
        for trial in range(10):
            raw = rng.uniform(size=(4, 12, 3))
            probs = raw / raw.sum(axis=-1, keepdims=True)
            labels = rng.integers(0, 3, size=12)
            mixture = PredictiveSamples(
                np.zeros((12, 1)), probs, "classification", "t"
            )
            member_nlls = [
                nll(
                    PredictiveSamples(np.zeros((12, 1)), probs[j : j + 1], "classification", "t"),
                    labels,
                )
                for j in range(4)
            ]
            assert nll(mixture, labels) <= np.mean(member_nlls) + 1e-12
