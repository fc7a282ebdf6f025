"""Exact GP regression: marginal likelihood breakdown, its gradient and the posterior."""

import logging
import math
from typing import Any, Tuple

import numpy as np

from .kernels import contract_kernel_grads, cross_kernel
from .models import (
    CholFactor,
    Dataset,
    FloatArray,
    Hyperparameters,
    KernelSpec,
    MLLBreakdown,
    NoiseMode,
    Posterior,
    PredictiveMetrics,
    SymMatrix,
)
from .numerics import cholesky_with_jitter, inverse, logdet, solve_spd, whiten

logger = logging.getLogger(__name__)

LOG_2PI = math.log(2.0 * math.pi)

# predictive variances are floored here before taking logs in the NLPD
_VARIANCE_FLOOR = 1e-12


def noisy_kernel_matrix(X: Any, h: Hyperparameters, spec: KernelSpec) -> SymMatrix:
    """K + sigma_n^2 I."""
    k = cross_kernel(X, X, h, spec)
    k[np.diag_indices_from(k)] += h.noise_var
    return SymMatrix(entries=k)


def factor_training_matrix(d: Dataset, h: Hyperparameters, spec: KernelSpec) -> CholFactor:
    """Cholesky factor of K + sigma_n^2 I on the training inputs."""
    return cholesky_with_jitter(noisy_kernel_matrix(d.X, h, spec))


def breakdown_from_factor(y: FloatArray, f: CholFactor) -> MLLBreakdown:
    """Evaluate the three LML terms from an existing factorization."""
    v = whiten(f, y)
    return MLLBreakdown(
        data_fit=-0.5 * float(v @ v),
        complexity=-0.5 * logdet(f),
        constant=-0.5 * y.shape[0] * LOG_2PI,
        jitter_used=f.jitter_used,
    )


def log_marginal_likelihood(d: Dataset, h: Hyperparameters, spec: KernelSpec) -> MLLBreakdown:
    """log N(y; 0, K + sigma_n^2 I) split into data fit, complexity and constant.

    One Cholesky factorization serves both the quadratic form ||L^-1 y||^2 and the
    log-determinant.

    Args:
        d: Training data
        h: Hyperparameters
        spec: Kernel family

    Returns:
        MLLBreakdown: The three terms and their total

    Raises:
        NotPositiveDefiniteError: If K + sigma_n^2 I cannot be factored
    """
    return breakdown_from_factor(d.y, factor_training_matrix(d, h, spec))


def _gradient_from_factor(
    d: Dataset, h: Hyperparameters, spec: KernelSpec, f: CholFactor
) -> Tuple[FloatArray, FloatArray]:
    alpha = solve_spd(f, d.y)
    w = np.outer(alpha, alpha) - inverse(f)
    grad = 0.5 * contract_kernel_grads(d.X, h, spec, w)

    # d(K + sigma_n^2 I)/dlog_noise = sigma_n^2 I in both noise modes
    noise_term = 0.5 * h.noise_var * float(np.trace(w))
    grad[2] = noise_term
    if h.noise_mode == NoiseMode.RATIO:
        grad[1] += noise_term
    return grad, alpha


def lml_gradient(d: Dataset, h: Hyperparameters, spec: KernelSpec) -> FloatArray:
    """Gradient of the LML with respect to h.to_vector().

    Uses dLML/dtheta = 1/2 tr((alpha alpha^T - (K + sigma_n^2 I)^-1) d(K + sigma_n^2 I)/dtheta).
    In ratio mode the noise scales with sigma_f^2, so the log_signal_var coordinate also
    carries the noise derivative.
    """
    grad, _ = _gradient_from_factor(d, h, spec, factor_training_matrix(d, h, spec))
    return grad


def lml_value_and_gradient(
    d: Dataset, h: Hyperparameters, spec: KernelSpec
) -> Tuple[MLLBreakdown, FloatArray]:
    """LML breakdown and gradient from a single factorization."""
    f = factor_training_matrix(d, h, spec)
    grad, _ = _gradient_from_factor(d, h, spec, f)
    return breakdown_from_factor(d.y, f), grad


def posterior_predict(
    d: Dataset,
    h: Hyperparameters,
    spec: KernelSpec,
    X_star: Any,
    include_noise: bool = True,
) -> Posterior:
    """Predictive mean and variance at test inputs.

    Args:
        d: Training data
        h: Hyperparameters
        spec: Kernel family
        X_star: Test inputs, one row per point
        include_noise: Add sigma_n^2 to the predictive variance (default: True)

    Returns:
        Posterior: Mean K*^T (K + sigma_n^2 I)^-1 y and variance diag(K** - K*^T (...)^-1 K*)
    """
    f = factor_training_matrix(d, h, spec)
    alpha = solve_spd(f, d.y)
    k_star = cross_kernel(d.X, X_star, h, spec)
    v = whiten(f, k_star)

    mean = k_star.T @ alpha
    # k(x, x) = sigma_f^2 for every family
    variance = h.signal_var - np.sum(v * v, axis=0)
    if include_noise:
        variance = variance + h.noise_var

    if np.any(variance < -1e-10):
        logger.warning(
            "clamping predictive variance %.3e to zero", float(np.min(variance))
        )
    return Posterior(mean=mean, variance=np.maximum(variance, 0.0))


def predictive_metrics(posterior: Posterior, y_true: Any) -> PredictiveMetrics:
    """RMSE and mean Gaussian negative log predictive density."""
    y = np.asarray(y_true, dtype=np.float64)
    resid = y - posterior.mean
    var = np.maximum(posterior.variance, _VARIANCE_FLOOR)
    nlpd = 0.5 * (LOG_2PI + np.log(var)) + 0.5 * resid**2 / var
    return PredictiveMetrics(rmse=float(np.sqrt(np.mean(resid**2))), mean_nlpd=float(np.mean(nlpd)))
