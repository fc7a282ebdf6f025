"""RBF and deep RBF kernels, kernel matrices and their hyperparameter derivatives."""

from typing import Any

import numpy as np
from scipy.spatial.distance import cdist, pdist

from .base import DimensionMismatchError, MissingNetworkError
from .feature_net import net_forward, net_forward_batch, net_param_jacobian, net_vjp_batch
from .models import FloatArray, Hyperparameters, KernelFamily, KernelGrads, KernelSpec, SymMatrix


def _as_inputs(X: Any) -> FloatArray:
    inputs = np.asarray(X, dtype=np.float64)
    if inputs.ndim == 1:
        inputs = inputs.reshape(-1, 1)
    if inputs.ndim != 2 or inputs.shape[0] < 1:
        raise DimensionMismatchError(f"inputs must be a non-empty N x D array, got {inputs.shape}")
    return inputs


def _require_net(h: Hyperparameters) -> None:
    if h.net_weights is None:
        raise MissingNetworkError("deep kernel evaluated without network weights")


def rbf_eval(x: FloatArray, x_prime: FloatArray, h: Hyperparameters) -> float:
    """sigma_f^2 * exp(-||x - x'||^2 / (2 l^2)).

    Raises:
        DimensionMismatchError: If x and x' differ in length
    """
    a = np.atleast_1d(np.asarray(x, dtype=np.float64))
    b = np.atleast_1d(np.asarray(x_prime, dtype=np.float64))
    if a.shape != b.shape:
        raise DimensionMismatchError(
            f"inputs have shapes {a.shape} and {b.shape}", expected=a.shape[0], actual=b.shape[0]
        )
    sq = float(np.sum((a - b) ** 2))
    return h.signal_var * float(np.exp(-0.5 * sq / h.lengthscale**2))


def deep_kernel_eval(x: FloatArray, x_prime: FloatArray, h: Hyperparameters) -> float:
    """RBF kernel on network-warped inputs.

    Raises:
        MissingNetworkError: If h carries no network weights
    """
    _require_net(h)
    assert h.net_weights is not None
    a = np.atleast_1d(np.asarray(x, dtype=np.float64))
    b = np.atleast_1d(np.asarray(x_prime, dtype=np.float64))
    return rbf_eval(net_forward(h.net_weights, a), net_forward(h.net_weights, b), h)


def kernel_eval(x: FloatArray, x_prime: FloatArray, h: Hyperparameters, spec: KernelSpec) -> float:
    """Evaluate the kernel of the given family on one pair of inputs."""
    if spec.family == KernelFamily.DEEP_RBF:
        return deep_kernel_eval(x, x_prime, h)
    return rbf_eval(x, x_prime, h)


def _rbf_from_sq(sq: FloatArray, h: Hyperparameters) -> FloatArray:
    return h.signal_var * np.exp(-0.5 * sq / h.lengthscale**2)


def features(X: Any, h: Hyperparameters, spec: KernelSpec) -> FloatArray:
    """Inputs as seen by the base kernel: raw for rbf, network outputs for deep_rbf."""
    inputs = _as_inputs(X)
    if spec.family == KernelFamily.DEEP_RBF:
        _require_net(h)
        assert h.net_weights is not None
        return net_forward_batch(h.net_weights, inputs)
    return inputs


def cross_kernel(X1: Any, X2: Any, h: Hyperparameters, spec: KernelSpec) -> FloatArray:
    """Rectangular matrix of k(x1_i, x2_j)."""
    a = features(X1, h, spec)
    b = features(X2, h, spec)
    if a.shape[1] != b.shape[1]:
        raise DimensionMismatchError(
            f"input dimensions differ: {a.shape[1]} and {b.shape[1]}",
            expected=a.shape[1],
            actual=b.shape[1],
        )
    return _rbf_from_sq(cdist(a, b, "sqeuclidean"), h)


def kernel_matrix(X: Any, h: Hyperparameters, spec: KernelSpec) -> SymMatrix:
    """K_ij = k(x_i, x_j) over all input pairs; the diagonal is exactly sigma_f^2."""
    return SymMatrix(entries=cross_kernel(X, X, h, spec))


def kernel_matrix_grads(X: Any, h: Hyperparameters, spec: KernelSpec) -> KernelGrads:
    """Derivatives of the kernel matrix with respect to every kernel hyperparameter.

    dK/dlog(l) = K * ||x_i - x_j||^2 / l^2 and dK/dlog(sigma_f^2) = K. For deep kernels
    the weight derivatives chain the squared-distance derivative through the network
    Jacobian.
    """
    inputs = _as_inputs(X)
    z = features(inputs, h, spec)
    sq = cdist(z, z, "sqeuclidean")
    inv_l2 = 1.0 / h.lengthscale**2
    k = _rbf_from_sq(sq, h)

    net_grads = None
    if spec.family == KernelFamily.DEEP_RBF:
        assert h.net_weights is not None
        jacobian = net_param_jacobian(h.net_weights, inputs)
        diff = z[:, None, :] - z[None, :, :]
        jdiff = jacobian[:, None, :, :] - jacobian[None, :, :, :]
        net_grads = -inv_l2 * k[None, :, :] * np.einsum("ijc,ijcp->pij", diff, jdiff)

    return KernelGrads(
        log_lengthscale=SymMatrix(entries=k * sq * inv_l2),
        log_signal_var=SymMatrix(entries=k),
        net_weights=net_grads,
    )


def contract_kernel_grads(
    X: Any, h: Hyperparameters, spec: KernelSpec, weights: FloatArray
) -> FloatArray:
    """sum_ij W_ij dK_ij/dtheta for every coordinate of h.to_vector().

    The log_noise entry is zero; noise is not a kernel parameter. Weight coordinates are
    obtained with one reverse pass through the network instead of per-weight matrices.

    Args:
        X: Training inputs
        h: Hyperparameters
        spec: Kernel family
        weights: N x N matrix W (symmetrized internally)

    Returns:
        Gradient vector aligned with h.to_vector()
    """
    inputs = _as_inputs(X)
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (inputs.shape[0], inputs.shape[0]):
        raise DimensionMismatchError(
            f"weight matrix has shape {w.shape}, expected {(inputs.shape[0],) * 2}",
            expected=inputs.shape[0],
            actual=w.shape[0],
        )
    w = 0.5 * (w + w.T)

    z = features(inputs, h, spec)
    sq = cdist(z, z, "sqeuclidean")
    inv_l2 = 1.0 / h.lengthscale**2
    k = h.signal_var * np.exp(-0.5 * sq * inv_l2)
    wk = w * k

    grad = np.zeros(h.size)
    grad[0] = float(np.sum(wk * sq)) * inv_l2
    grad[1] = float(np.sum(wk))
    if spec.family == KernelFamily.DEEP_RBF:
        assert h.net_weights is not None
        upstream = -2.0 * inv_l2 * (wk.sum(axis=1)[:, None] * z - wk @ z)
        grad_w, _ = net_vjp_batch(h.net_weights, inputs, upstream)
        grad[3:] = grad_w.flatten()
    return grad


def median_pairwise_distance(Z: Any) -> float:
    """Median of the nonzero pairwise Euclidean distances; 1.0 when there are none."""
    dists = pdist(_as_inputs(Z))
    dists = dists[dists > 0.0]
    if dists.size == 0:
        return 1.0
    return float(np.median(dists))


def max_pairwise_distance(Z: Any) -> float:
    """Largest pairwise Euclidean distance; 1.0 for a single point or coincident points."""
    dists = pdist(_as_inputs(Z))
    if dists.size == 0 or float(np.max(dists)) == 0.0:
        return 1.0
    return float(np.max(dists))
