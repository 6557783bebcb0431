"""RBF-kernel Gaussian processes: exact regression, prior sampling, and
variational binary classification.

Regression follows the standard Cholesky recipe on K + noise * I; the
classifier places a factorized Gaussian over the latent function values at
the training inputs (no inducing points) and maximizes

    ELBO = sum_i E_q[log Bernoulli-logit(y_i | f_i)] - KL(q || N(0, K)),

with the expectations computed by Gauss-Hermite quadrature.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular

from .errors import ConfigError, JitterError, NumericalError

Array = np.ndarray


@dataclass(frozen=True)
class RbfKernel:
    """k(x, x') = signal_variance * exp(-|x - x'|^2 / (2 lengthscale^2)).

    Inputs are divided by ``input_scale`` before anything else; image
    experiments use it to bring pixel distances to an order the lengthscale
    can resolve.
    """

    lengthscale: float
    signal_variance: float = 1.0
    input_scale: float = 1.0

    def __post_init__(self):
        if not (self.lengthscale > 0 and self.signal_variance > 0 and self.input_scale > 0):
            raise ConfigError("kernel hyperparameters must be positive")


def _prep(kernel: RbfKernel, x: Array) -> Array:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    return x / kernel.input_scale


def kernel_matrix(kernel: RbfKernel, x: Array, x2: Optional[Array] = None) -> Array:
    """Dense kernel matrix K(x, x2); symmetric PSD when x2 is x."""
    a = _prep(kernel, x)
    b = a if x2 is None else _prep(kernel, x2)
    if a.shape[1] != b.shape[1]:
        raise ConfigError("kernel inputs have mismatched dimensions")
    sq = (
        np.sum(a**2, axis=1)[:, None]
        + np.sum(b**2, axis=1)[None, :]
        - 2.0 * (a @ b.T)
    )
    return self_var(kernel) * np.exp(-np.maximum(sq, 0.0) / (2.0 * kernel.lengthscale**2))


def self_var(kernel: RbfKernel) -> float:
    return kernel.signal_variance


def _chol_with_jitter(matrix: Array, signal_variance: float, start: float = 1e-10, cap: float = 1e-4):
    """Lower Cholesky factor of matrix + jitter * I, escalating jitter x10."""
    jitter = 0.0
    while True:
        try:
            shifted = matrix if jitter == 0.0 else matrix + jitter * np.eye(len(matrix))
            return cholesky(shifted, lower=True), jitter
        except np.linalg.LinAlgError:
            pass
        jitter = start * signal_variance if jitter == 0.0 else jitter * 10.0
        if jitter > cap * signal_variance:
            raise JitterError(
                f"factorization failed with jitter escalated to {jitter:.3e}"
            )


@dataclass
class GPRegressor:
    """Fitted exact-regression state: Cholesky factor and solve vector."""

    kernel: RbfKernel
    x_train: Array
    y_train: Array
    noise_variance: float
    chol: Array  # lower-triangular L with K + noise*I = L L^T
    alpha: Array  # (K + noise*I)^{-1} y
    jitter: float


def gp_fit(x: Array, y: Array, kernel: RbfKernel, noise_variance: float) -> GPRegressor:
    """Cholesky of K + noise * I with the escalating-jitter policy."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.ndim == 1:
        x = x[:, None]
    if len(x) < 1:
        raise ConfigError("need at least one training point")
    if len(x) != len(y):
        raise ConfigError("targets do not align with inputs")
    if noise_variance < 0:
        raise ConfigError("noise variance must be >= 0")
    k = kernel_matrix(kernel, x)
    k[np.diag_indices_from(k)] += noise_variance
    chol, jitter = _chol_with_jitter(k, kernel.signal_variance)
    alpha = cho_solve((chol, True), y)
    return GPRegressor(kernel, x, y, noise_variance, chol, alpha, jitter)


def gp_predict(model: GPRegressor, x_star: Array) -> Tuple[Array, Array]:
    """Conditional mean and variance at test inputs; variances clamped at 0."""
    x_star = np.asarray(x_star, dtype=np.float64)
    if x_star.ndim == 1:
        x_star = x_star[:, None]
    k_star = kernel_matrix(model.kernel, model.x_train, x_star)
    mean = k_star.T @ model.alpha
    v = solve_triangular(model.chol, k_star, lower=True)
    var = self_var(model.kernel) - np.sum(v**2, axis=0)
    return mean, np.maximum(var, 0.0)


def gp_log_marginal(model: GPRegressor) -> float:
    """-0.5 y^T (K + noise I)^{-1} y - sum(log L_ii) - (n/2) log 2 pi."""
    n = len(model.y_train)
    return float(
        -0.5 * model.y_train @ model.alpha
        - np.sum(np.log(np.diag(model.chol)))
        - 0.5 * n * np.log(2.0 * np.pi)
    )


def gp_sample_prior(kernel: RbfKernel, x: Array, n_functions: int, seed) -> Array:
    """(n_functions, n) draws from N(0, K + jitter I) via Cholesky."""
    x = np.asarray(x, dtype=np.float64)
    if len(x) == 0:
        raise ConfigError("need at least one input location")
    k = kernel_matrix(kernel, x)
    chol, _ = _chol_with_jitter(k, kernel.signal_variance)
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n_functions, len(k)))
    return z @ chol.T


# ---------------------------------------------------------------------------
# Variational binary classification
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GpViConfig:
    iterations: int = 500
    learning_rate: float = 0.05
    quad_points: int = 20
    init_log_std: float = 0.0

    def __post_init__(self):
        if self.iterations < 1 or self.quad_points < 1:
            raise ConfigError("iterations and quad_points must be >= 1")
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be > 0")


@dataclass
class GpClassifier:
    """Variational state q(f) = N(m, diag(s^2)) over latent training values."""

    kernel: RbfKernel
    x_train: Array
    y_train: Array
    mean: Array
    log_std: Array
    chol: Array  # Cholesky of K + jitter I
    elbo_trace: Array

    @property
    def elbo(self) -> float:
        return float(self.elbo_trace[-1])

    def predict_proba(self, x_star: Array) -> Array:
        """Posterior link probability via the conditional mean of the latent."""
        k_star = kernel_matrix(self.kernel, self.x_train, x_star)
        f_star = k_star.T @ cho_solve((self.chol, True), self.mean)
        return _sigmoid(f_star)

    def predict(self, x_star: Array) -> Array:
        return (self.predict_proba(x_star) >= 0.5).astype(np.int64)


def _sigmoid(z: Array) -> Array:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    e = np.exp(z[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def _log_sigmoid(z: Array) -> Array:
    return -np.logaddexp(0.0, -z)


def gp_classify_binary(
    x: Array, y: Array, kernel: RbfKernel, config: GpViConfig = GpViConfig(), seed: int = 0
) -> GpClassifier:
    """Fit the factorized Gaussian over latent f by Adam ascent on the ELBO."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    y = np.asarray(y).astype(np.int64).ravel()
    if set(np.unique(y)) - {0, 1}:
        raise ConfigError("labels must be binary in {0, 1}")
    if len(np.unique(y)) < 2:
        raise ConfigError("both classes must be present")
    n = len(x)
    signs = 2.0 * y - 1.0
    k = kernel_matrix(kernel, x)
    chol, _ = _chol_with_jitter(k, kernel.signal_variance)
    k_inv = cho_solve((chol, True), np.eye(n))
    k_inv_diag = np.diag(k_inv).copy()
    logdet_k = 2.0 * float(np.sum(np.log(np.diag(chol))))

    nodes, weights = np.polynomial.hermite.hermgauss(config.quad_points)
    weights = weights / np.sqrt(np.pi)

    m = np.zeros(n)
    rho = np.full(n, float(config.init_log_std))
    adam_m = np.zeros(2 * n)
    adam_v = np.zeros(2 * n)
    beta1, beta2, eps_adam = 0.9, 0.999, 1e-8
    trace = np.empty(config.iterations)
    for it in range(config.iterations):
        s = np.exp(rho)
        # f = m + sqrt(2) s t at the quadrature nodes
        f = m[:, None] + np.sqrt(2.0) * s[:, None] * nodes[None, :]
        z = signs[:, None] * f
        like = np.sum(_log_sigmoid(z) @ weights)
        d_like_df = signs[:, None] * _sigmoid(-z)
        d_m = d_like_df @ weights
        d_rho = (d_like_df * (np.sqrt(2.0) * nodes[None, :])) @ weights * s
        k_inv_m = k_inv @ m
        kl = 0.5 * (
            float(k_inv_diag @ (s**2))
            + float(m @ k_inv_m)
            - n
            + logdet_k
            - 2.0 * float(np.sum(rho))
        )
        elbo = like - kl
        if not np.isfinite(elbo):
            raise NumericalError("GP classification ELBO diverged")
        trace[it] = elbo
        grad = np.concatenate([d_m - k_inv_m, d_rho - (k_inv_diag * s**2 - 1.0)])
        adam_m = beta1 * adam_m + (1 - beta1) * grad
        adam_v = beta2 * adam_v + (1 - beta2) * grad * grad
        m_hat = adam_m / (1 - beta1 ** (it + 1))
        v_hat = adam_v / (1 - beta2 ** (it + 1))
        update = config.learning_rate * m_hat / (np.sqrt(v_hat) + eps_adam)
        m = m + update[:n]
        rho = rho + update[n:]
    return GpClassifier(kernel, x, y, m, rho, chol, trace)


# ---------------------------------------------------------------------------
# Label-corruption sweep
# ---------------------------------------------------------------------------


@dataclass
class SweepRow:
    fraction: float
    train_accuracy: float
    test_accuracy: float
    evidence: float  # ELBO (classification) or log marginal likelihood
    seed: int


def corruption_sweep(
    x: Array,
    y: Array,
    x_test: Array,
    y_test: Array,
    kernel: RbfKernel,
    fractions: Sequence[float],
    config: GpViConfig = GpViConfig(),
    seed: int = 0,
) -> list:
    """Refit the variational classifier after reshuffling a growing fraction
    of training labels; fraction 0 must be part of the grid."""
    fractions = [float(f) for f in fractions]
    if 0.0 not in fractions:
        raise ConfigError("fractions must include 0")
    y = np.asarray(y).astype(np.int64)
    rows = []
    for fraction in fractions:
        labels = y.copy()
        if fraction > 0.0:
            rng = np.random.default_rng((seed, int(round(fraction * 1000))))
            count = int(np.floor(fraction * len(labels) + 0.5))
            idx = rng.choice(len(labels), size=count, replace=False)
            labels[idx] = rng.integers(0, 2, size=count)
        clf = gp_classify_binary(x, labels, kernel, config, seed=seed)
        train_acc = float(np.mean((clf.mean > 0).astype(np.int64) == labels))
        test_acc = float(np.mean(clf.predict(x_test) == np.asarray(y_test).astype(np.int64)))
        rows.append(SweepRow(fraction, train_acc, test_acc, clf.elbo, seed))
    return rows
