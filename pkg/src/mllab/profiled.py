"""Profiled signal variance and the profiled (concentrated) marginal likelihood.

With k = sigma_f^2 k_hat and sigma_n^2 = sigma_n_hat^2 sigma_f^2 the LML is maximized in
sigma_f^2 by sigma_f_hat^2(theta) = y^T (K_hat + sigma_n_hat^2 I)^-1 y / N. Substituting it
back gives

    -N/2 - (N/2) log sigma_f_hat^2(theta) - 1/2 log|K_hat + sigma_n_hat^2 I| - (N/2) log 2 pi

where the second term still depends on theta and y: it is a data-fit term.
"""

import math
from typing import List, NamedTuple, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize_scalar

from .base import ZeroTargetError
from .gp import LOG_2PI, factor_training_matrix, lml_gradient, log_marginal_likelihood
from .kernels import contract_kernel_grads
from .models import (
    CholFactor,
    Dataset,
    FloatArray,
    GridArgmaxReport,
    Hyperparameters,
    KernelSpec,
    LogdetSplit,
    NoiseMode,
    ProfiledResult,
    StationarityReport,
)
from .numerics import inverse, logdet, solve_spd, whiten


class _ProfiledTerms(NamedTuple):
    h_unit: Hyperparameters
    factor: CholFactor
    sigma_f_hat_sq: float
    term_data_refit: float
    term_logdet_hat: float
    total: float


def _require_targets(d: Dataset) -> None:
    if not np.any(d.y):
        raise ZeroTargetError("profiled signal variance is zero for all-zero targets")


def _profiled_terms(d: Dataset, h_hat: Hyperparameters, spec: KernelSpec) -> _ProfiledTerms:
    _require_targets(d)
    h_unit = h_hat.unit_amplitude()
    f = factor_training_matrix(d, h_unit, spec)
    v = whiten(f, d.y)
    s2 = float(v @ v) / d.n
    refit = 0.5 * d.n * math.log(s2)
    logdet_hat = 0.5 * logdet(f)
    total = -0.5 * d.n - refit - logdet_hat - 0.5 * d.n * LOG_2PI
    return _ProfiledTerms(h_unit, f, s2, refit, logdet_hat, total)


def induced_hyperparameters(h_hat: Hyperparameters, sigma_f_sq: float) -> Hyperparameters:
    """Full hyperparameters with sigma_f^2 set and noise sigma_f^2 * sigma_n_hat^2."""
    return h_hat.unit_amplitude().model_copy(update={"log_signal_var": math.log(sigma_f_sq)})


def profiled_signal_variance(d: Dataset, h_hat: Hyperparameters, spec: KernelSpec) -> float:
    """sigma_f_hat^2(theta) = y^T (K_hat + sigma_n_hat^2 I)^-1 y / N.

    h_hat's signal variance is ignored and its log_noise is read as the noise ratio.

    Raises:
        ZeroTargetError: If every target is zero
        NotPositiveDefiniteError: If K_hat + sigma_n_hat^2 I cannot be factored
    """
    return _profiled_terms(d, h_hat, spec).sigma_f_hat_sq


def logdet_split(d: Dataset, h: Hyperparameters, spec: KernelSpec) -> LogdetSplit:
    """Both sides of 1/2 log|K + sigma_n^2 I| = (N/2) log sigma_f^2 + 1/2 log|K_hat + sigma_n_hat^2 I|.

    Raises:
        ValueError: If h is not in ratio noise mode
    """
    if h.noise_mode != NoiseMode.RATIO:
        raise ValueError("logdet_split needs hyperparameters in ratio noise mode")
    full = factor_training_matrix(d, h, spec)
    unit = factor_training_matrix(d, h.unit_amplitude(), spec)
    return LogdetSplit(
        lhs=0.5 * logdet(full),
        rhs=0.5 * d.n * h.log_signal_var + 0.5 * logdet(unit),
    )


def profiled_objective(d: Dataset, h_hat: Hyperparameters, spec: KernelSpec) -> ProfiledResult:
    """Profiled LML and its equivalence check against the full LML.

    The full LML is evaluated at sigma_f^2 = sigma_f_hat^2(theta) and
    sigma_n^2 = sigma_f_hat^2 sigma_n_hat^2; its data-fit term must equal -N/2.

    Args:
        d: Training data
        h_hat: Hyperparameters; log_noise is the noise ratio
        spec: Kernel family

    Returns:
        ProfiledResult: Terms, total and residuals
    """
    terms = _profiled_terms(d, h_hat, spec)
    induced = log_marginal_likelihood(
        d, induced_hyperparameters(h_hat, terms.sigma_f_hat_sq), spec
    )
    return ProfiledResult(
        n=d.n,
        sigma_f_hat_sq=terms.sigma_f_hat_sq,
        term_data_refit=terms.term_data_refit,
        term_logdet_hat=terms.term_logdet_hat,
        profiled_total=terms.total,
        induced=induced,
        equivalence_residual=abs(terms.total - induced.total),
        data_fit_residual=abs(induced.data_fit + 0.5 * d.n),
    )


def profiled_value(d: Dataset, h_hat: Hyperparameters, spec: KernelSpec) -> float:
    """Profiled LML total without the equivalence check."""
    return _profiled_terms(d, h_hat, spec).total


def verify_stationarity(
    d: Dataset, h_hat: Hyperparameters, spec: KernelSpec, tol: float = 1e-8
) -> StationarityReport:
    """Check that sigma_f_hat^2 is a stationary point and a maximum of the LML in sigma_f^2."""
    s2 = profiled_signal_variance(d, h_hat, spec)
    at_optimum = induced_hyperparameters(h_hat, s2)
    return StationarityReport(
        sigma_f_hat_sq=s2,
        gradient=float(lml_gradient(d, at_optimum, spec)[1]),
        lml_at_optimum=log_marginal_likelihood(d, at_optimum, spec).total,
        lml_below=log_marginal_likelihood(d, induced_hyperparameters(h_hat, 0.9 * s2), spec).total,
        lml_above=log_marginal_likelihood(d, induced_hyperparameters(h_hat, 1.1 * s2), spec).total,
        tol=tol,
    )


def sensitivity_of_profiled_amplitude(
    d: Dataset, h_hat: Hyperparameters, spec: KernelSpec
) -> FloatArray:
    """Gradient of log sigma_f_hat^2(theta), aligned with h_hat.to_vector().

    dlog sigma_f_hat^2/dtheta = -alpha^T dK_hat_y/dtheta alpha / (N sigma_f_hat^2) with
    alpha = (K_hat + sigma_n_hat^2 I)^-1 y. The log_signal_var entry is zero.
    """
    terms = _profiled_terms(d, h_hat, spec)
    alpha = solve_spd(terms.factor, d.y)
    grad = contract_kernel_grads(d.X, terms.h_unit, spec, np.outer(alpha, alpha))
    grad[1] = 0.0
    grad[2] = terms.h_unit.noise_var * float(alpha @ alpha)
    return -grad / (d.n * terms.sigma_f_hat_sq)


def profiled_value_and_gradient(
    d: Dataset, h_hat: Hyperparameters, spec: KernelSpec
) -> Tuple[float, FloatArray]:
    """Profiled LML and its gradient, aligned with h_hat.to_vector().

    The gradient is 1/2 tr((alpha alpha^T / sigma_f_hat^2 - K_hat_y^-1) dK_hat_y/dtheta);
    the log_signal_var entry is zero.
    """
    terms = _profiled_terms(d, h_hat, spec)
    alpha = solve_spd(terms.factor, d.y)
    w = np.outer(alpha, alpha) / terms.sigma_f_hat_sq - inverse(terms.factor)
    grad = 0.5 * contract_kernel_grads(d.X, terms.h_unit, spec, w)
    grad[1] = 0.0
    grad[2] = 0.5 * terms.h_unit.noise_var * float(np.trace(w))
    return terms.total, grad


def profiled_gradient(d: Dataset, h_hat: Hyperparameters, spec: KernelSpec) -> FloatArray:
    """Gradient of the profiled LML, aligned with h_hat.to_vector()."""
    return profiled_value_and_gradient(d, h_hat, spec)[1]


def maximize_over_signal_var(d: Dataset, h: Hyperparameters, spec: KernelSpec) -> float:
    """Maximize the full LML over log sigma_f^2 numerically, other parameters fixed.

    Noise follows sigma_f^2 through h's noise ratio. Used as an independent check of the
    closed form.
    """
    h_unit = h.unit_amplitude()
    start = math.log(max(float(np.var(d.y)), 1e-6))

    def negative_lml(log_signal_var: float) -> float:
        point = h_unit.model_copy(update={"log_signal_var": float(log_signal_var)})
        return -log_marginal_likelihood(d, point, spec).total

    result = minimize_scalar(
        negative_lml, bracket=(start - 1.0, start + 1.0), method="brent", tol=1e-12
    )
    return float(-result.fun)


def compare_grid_argmax(
    d: Dataset, h_hat: Hyperparameters, spec: KernelSpec, lengthscales: Sequence[float]
) -> GridArgmaxReport:
    """Argmax over a lengthscale grid of the profiled LML and of the per-point maximized LML.

    Ties resolve to the lowest index.
    """
    if len(lengthscales) == 0:
        raise ValueError("lengthscale grid must not be empty")
    profiled: List[float] = []
    joint: List[float] = []
    for lengthscale in lengthscales:
        point = h_hat.model_copy(update={"log_lengthscale": math.log(lengthscale)})
        profiled.append(profiled_value(d, point, spec))
        joint.append(maximize_over_signal_var(d, point, spec))
    return GridArgmaxReport(
        lengthscales=list(lengthscales),
        profiled_values=profiled,
        joint_values=joint,
        profiled_argmax=int(np.argmax(profiled)),
        joint_argmax=int(np.argmax(joint)),
    )
