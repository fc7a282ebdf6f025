"""Trainable objectives: full LML, profiled LML and conditional LML (CLML)."""

import math
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .feature_net import net_init
from .gp import (
    LOG_2PI,
    lml_value_and_gradient,
    log_marginal_likelihood,
    noisy_kernel_matrix,
)
from .kernels import features, median_pairwise_distance
from .models import (
    Coordinate,
    Dataset,
    FloatArray,
    Hyperparameters,
    KernelFamily,
    KernelSpec,
    NoiseMode,
    Objective,
    ObjectiveKind,
    Seed,
    SymMatrix,
)
from .numerics import cholesky_with_jitter, logdet, solve_spd, whiten
from .profiled import profiled_value_and_gradient


def active_mask(obj: Objective, h: Hyperparameters) -> FloatArray:
    """Boolean mask over h.to_vector() of the coordinates the objective optimizes."""
    mask = np.ones(h.size, dtype=bool)
    if Coordinate.LENGTHSCALE in obj.fixed:
        mask[0] = False
    if Coordinate.SIGNAL_VAR in obj.fixed or obj.kind == ObjectiveKind.PROFILED_LML:
        mask[1] = False
    if Coordinate.NOISE in obj.fixed or h.log_noise == -math.inf:
        mask[2] = False
    if Coordinate.NET in obj.fixed or obj.spec.family != KernelFamily.DEEP_RBF:
        mask[3:] = False
    return mask


def clml_orders(obj: Objective) -> List[FloatArray]:
    """Data orderings used by the CLML, one per permutation index."""
    n = obj.dataset.n
    if not obj.clml.shuffle:
        return [np.arange(n) for _ in range(obj.clml.permutations)]
    root = Seed(value=obj.clml.seed)
    return [root.spawn(p).generator().permutation(n) for p in range(obj.clml.permutations)]


def _clml_value_and_gradient(obj: Objective, h: Hyperparameters) -> Tuple[float, FloatArray]:
    d = obj.dataset
    m = obj.clml.conditioning_size(d.n)
    if m == d.n:
        # nothing is held out
        return 0.0, np.zeros(h.size)

    full, full_grad = lml_value_and_gradient(d, h, obj.spec)
    if m == 0:
        return full.total, full_grad

    terms: List[float] = []
    sub_grad_sum = np.zeros(h.size)
    for order in clml_orders(obj):
        sub, sub_grad = lml_value_and_gradient(d.subset(order[:m]), h, obj.spec)
        terms.append(full.total - sub.total)
        sub_grad_sum = sub_grad_sum + sub_grad

    count = len(terms)
    return sum(terms) / count, full_grad - sub_grad_sum / count


def eval_objective(obj: Objective, h: Hyperparameters) -> Tuple[float, FloatArray]:
    """Objective value and gradient over h.to_vector().

    Inactive coordinates carry a zero gradient. For profiled_lml, h is read with its
    signal variance ignored and log_noise as the noise ratio.

    Args:
        obj: Objective
        h: Hyperparameters

    Returns:
        Tuple of value and gradient

    Raises:
        NotPositiveDefiniteError: If a kernel matrix cannot be factored
        ZeroTargetError: For profiled_lml on all-zero targets
    """
    if obj.kind == ObjectiveKind.PROFILED_LML:
        value, grad = profiled_value_and_gradient(obj.dataset, h, obj.spec)
    elif obj.kind == ObjectiveKind.CLML:
        value, grad = _clml_value_and_gradient(obj, h)
    else:
        breakdown, grad = lml_value_and_gradient(obj.dataset, h, obj.spec)
        value = breakdown.total

    if obj.weight_decay > 0.0 and h.net_weights is not None:
        w = h.net_weights.flatten()
        value -= 0.5 * obj.weight_decay * float(w @ w)
        grad = grad.copy()
        grad[3:] -= obj.weight_decay * w

    return value, np.where(active_mask(obj, h), grad, 0.0)


def conditional_log_likelihood(
    d: Dataset, h: Hyperparameters, spec: KernelSpec, order: Sequence[int], m: int
) -> float:
    """log p(y_B | y_A) by Gaussian conditioning, A = order[:m], B = order[m:].

    This is an independent code path to LML(all) - LML(A).
    """
    index = np.asarray(order, dtype=np.int64)
    held_in, held_out = index[:m], index[m:]
    if held_out.size == 0:
        return 0.0
    if held_in.size == 0:
        return log_marginal_likelihood(d.subset(held_out), h, spec).total

    k_y = noisy_kernel_matrix(d.X[index], h, spec).entries
    k_aa, k_ab, k_bb = k_y[:m, :m], k_y[:m, m:], k_y[m:, m:]
    y_a, y_b = d.y[held_in], d.y[held_out]

    f_a = cholesky_with_jitter(SymMatrix(entries=k_aa))
    mean = k_ab.T @ solve_spd(f_a, y_a)
    v = whiten(f_a, k_ab)
    f_s = cholesky_with_jitter(SymMatrix(entries=k_bb - v.T @ v))
    r = whiten(f_s, y_b - mean)
    return -0.5 * float(r @ r) - 0.5 * logdet(f_s) - 0.5 * held_out.size * LOG_2PI


def clml_chain_residual(
    d: Dataset, h: Hyperparameters, spec: KernelSpec, order: Sequence[int], m: int
) -> float:
    """|LML(all) - LML(first m) - log p(rest | first m)| for one ordering."""
    index = np.asarray(order, dtype=np.int64)
    full = log_marginal_likelihood(d, h, spec).total
    head = log_marginal_likelihood(d.subset(index[:m]), h, spec).total if m > 0 else 0.0
    return abs(full - head - conditional_log_likelihood(d, h, spec, index, m))


def initial_hyperparameters(
    d: Dataset,
    spec: KernelSpec,
    seed: Seed,
    noise_mode: NoiseMode = NoiseMode.ABSOLUTE,
) -> Hyperparameters:
    """Scale-aware starting point.

    log l = log(median pairwise distance), sigma_f^2 = var(y), sigma_n^2 = 0.1 var(y); for
    deep kernels the network is initialised from the seed and distances are measured
    between its outputs. A zero target variance falls back to 1.

    Raises:
        ValueError: If a deep kernel spec has no network architecture
    """
    net = None
    if spec.family == KernelFamily.DEEP_RBF:
        if spec.net is None:
            raise ValueError("deep_rbf kernels need a network architecture in KernelSpec.net")
        net = net_init(spec.net, seed.spawn(0))

    unit = Hyperparameters(log_lengthscale=0.0, log_signal_var=0.0, log_noise=0.0, net_weights=net)
    lengthscale = median_pairwise_distance(features(d.X, unit, spec))

    var_y = float(np.var(d.y))
    if var_y <= 0.0:
        var_y = 1.0
    if noise_mode == NoiseMode.RATIO:
        log_noise = math.log(0.1)
    else:
        log_noise = math.log(0.1 * var_y)

    return Hyperparameters(
        log_lengthscale=math.log(lengthscale),
        log_signal_var=math.log(var_y),
        log_noise=log_noise,
        noise_mode=noise_mode,
        net_weights=net,
    )


def to_noise_mode(h: Hyperparameters, noise_mode: NoiseMode) -> Hyperparameters:
    """Same effective noise variance expressed in the other noise mode."""
    if h.noise_mode == noise_mode:
        return h
    if noise_mode == NoiseMode.RATIO:
        log_noise = h.log_noise - h.log_signal_var
    else:
        log_noise = h.log_noise + h.log_signal_var
    return h.model_copy(update={"log_noise": log_noise, "noise_mode": noise_mode})


def with_overrides(
    h: Hyperparameters,
    lengthscale: Optional[float] = None,
    signal_var: Optional[float] = None,
    noise: Optional[float] = None,
) -> Hyperparameters:
    """Replace natural-domain values; noise is read in h's noise mode and 0 means exactly zero."""
    update: Dict[str, float] = {}
    if lengthscale is not None:
        update["log_lengthscale"] = math.log(lengthscale)
    if signal_var is not None:
        update["log_signal_var"] = math.log(signal_var)
    if noise is not None:
        update["log_noise"] = math.log(noise) if noise > 0 else -math.inf
    return h.model_copy(update=update)


