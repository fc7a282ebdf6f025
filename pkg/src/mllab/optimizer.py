"""Gradient ascent with Armijo backtracking, and finite-difference gradient checks."""

import logging
import math
from typing import List, Optional, Tuple

import numpy as np

from .base import NumericalError
from .models import (
    FloatArray,
    GradientCheckReport,
    Hyperparameters,
    Objective,
    OptimizerConfig,
    OptStep,
    OptTrace,
    StopReason,
)
from .objectives import active_mask, eval_objective

logger = logging.getLogger(__name__)

# rounding allowance, in units in the last place, once the Armijo increment is unresolvable
VALUE_ULPS = 8


def _theta(x: FloatArray) -> List[Optional[float]]:
    return [float(v) if math.isfinite(v) else None for v in x]


def _max_norm(grad: FloatArray) -> float:
    return float(np.max(np.abs(grad))) if grad.size else 0.0


def _try_eval(
    obj: Objective, h0: Hyperparameters, x: FloatArray
) -> Optional[Tuple[float, FloatArray]]:
    """Objective at x, or None when x is outside the domain or the factorization fails."""
    try:
        return eval_objective(obj, h0.with_vector(x))
    except (NumericalError, ValueError) as e:
        logger.debug("trial point rejected: %s", e)
        return None


def _sufficient_increase(
    value: float, grad: FloatArray, result: Tuple[float, FloatArray], increment: float
) -> bool:
    """Armijo test, with a gradient test once the increment is below the resolution of value.

    Near an optimum value + increment rounds to value and every float-equal trial would
    pass, including steps that overshoot. There the step must not turn the gradient
    around or make it larger, and the value may differ from the current one only by
    rounding.
    """
    new_value, new_grad = result
    if not math.isfinite(new_value):
        return False
    threshold = value + increment
    if threshold > value:
        return new_value >= threshold
    return (
        new_value >= value - VALUE_ULPS * float(np.spacing(abs(value)))
        and float(new_grad @ grad) >= 0.0
        and _max_norm(new_grad) <= _max_norm(grad)
    )


def optimize(
    obj: Objective, h0: Hyperparameters, config: Optional[OptimizerConfig] = None
) -> OptTrace:
    """Maximize an objective over its active coordinates.

    Steps follow the raw gradient. Each iteration starts from twice the previously
    accepted step (capped at max_step) and halves it until the Armijo condition
    f(x + t g) >= f(x) + c1 t |g|^2 holds. Once c1 t |g|^2 is below the resolution of
    f(x) the trial must instead keep the gradient direction without growing it. A trial
    where the kernel matrix cannot be factored counts as rejected. When no step down to
    min_step is accepted the run stops with reason line_search_failure; this is
    recorded, not raised.

    Args:
        obj: Objective to maximize
        h0: Starting hyperparameters
        config: Optimizer settings (default: OptimizerConfig())

    Returns:
        OptTrace: Accepted iterates, starting with h0

    Raises:
        NotPositiveDefiniteError: If the objective cannot be evaluated at h0
    """
    cfg = config or OptimizerConfig()
    mask = active_mask(obj, h0)
    x = h0.to_vector()
    value, grad = eval_objective(obj, h0)
    steps = [OptStep(theta=_theta(x), value=value, grad_max_norm=_max_norm(grad), step=0.0)]

    logger.info(
        "optimizing %s over %d of %d coordinates", obj.kind.value, int(mask.sum()), h0.size
    )

    reason = StopReason.MAX_ITERS
    step = cfg.initial_step
    for it in range(cfg.max_iters):
        if _max_norm(grad) <= cfg.grad_tol:
            reason = StopReason.GRADIENT_TOL
            break

        trial = step if it == 0 else min(2.0 * step, cfg.max_step)
        slope = float(grad @ grad)
        accepted = None
        while trial >= cfg.min_step:
            # zero gradient entries keep inactive coordinates (and a -inf noise) in place
            candidate = x + trial * grad
            result = _try_eval(obj, h0, candidate)
            increment = cfg.armijo_c1 * trial * slope
            if result is not None and _sufficient_increase(value, grad, result, increment):
                accepted = candidate, result
                break
            trial *= 0.5

        if accepted is None:
            reason = StopReason.LINE_SEARCH_FAILURE
            logger.warning(
                "line search failed at iteration %d (value %.6g, |g|_max %.3e)",
                it,
                value,
                _max_norm(grad),
            )
            break

        x, (value, grad) = accepted
        step = trial
        steps.append(OptStep(theta=_theta(x), value=value, grad_max_norm=_max_norm(grad), step=step))
        if (it + 1) % cfg.log_every == 0:
            logger.info("iteration %d: value %.10g, |g|_max %.3e", it + 1, value, _max_norm(grad))
    else:
        if _max_norm(grad) <= cfg.grad_tol:
            reason = StopReason.GRADIENT_TOL

    logger.info("stopped after %d steps: %s", len(steps) - 1, reason.value)
    return OptTrace(
        coordinate_names=h0.coordinate_names(),
        iterations=steps,
        converged=reason == StopReason.GRADIENT_TOL,
        reason=reason,
    )


def final_hyperparameters(h0: Hyperparameters, trace: OptTrace) -> Hyperparameters:
    """Hyperparameters at the last accepted iterate of a trace started from h0."""
    theta = [-math.inf if v is None else v for v in trace.final.theta]
    return h0.with_vector(theta)


def gradient_check(
    obj: Objective, h: Hyperparameters, step: float = 1e-6
) -> GradientCheckReport:
    """Compare the analytic gradient with central differences on every active coordinate.

    The relative error is |a - n| / max(|a|, |n|, 1): relative for derivatives of
    magnitude above 1 and absolute below it, so that coordinates whose derivative is
    zero (a zero-weight network, a flat direction) are not judged on finite-difference
    noise alone.

    Args:
        obj: Objective
        h: Point at which to check
        step: Finite-difference step in the log/weight domain (default: 1e-6)

    Returns:
        GradientCheckReport: Per-coordinate analytic and numeric derivatives
    """
    _, analytic = eval_objective(obj, h)
    x = h.to_vector()
    names = h.coordinate_names()
    report_names: List[str] = []
    a_list: List[float] = []
    n_list: List[float] = []
    errors: List[float] = []
    for i in np.flatnonzero(active_mask(obj, h)):
        up = x.copy()
        down = x.copy()
        up[i] += step
        down[i] -= step
        f_up, _ = eval_objective(obj, h.with_vector(up))
        f_down, _ = eval_objective(obj, h.with_vector(down))
        numeric = (f_up - f_down) / (2.0 * step)
        a = float(analytic[i])
        report_names.append(names[i])
        a_list.append(a)
        n_list.append(numeric)
        errors.append(abs(a - numeric) / max(abs(a), abs(numeric), 1.0))
    return GradientCheckReport(
        coordinate_names=report_names,
        analytic=a_list,
        numeric=n_list,
        relative_errors=errors,
        step=step,
    )
