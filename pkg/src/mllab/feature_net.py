"""Small feedforward feature network used to warp deep-kernel inputs."""

import math
from typing import List, Tuple

import numpy as np

from .base import DimensionMismatchError
from .models import Activation, FloatArray, NetSpec, NetWeights, Seed


def net_init(spec: NetSpec, seed: Seed) -> NetWeights:
    """Glorot-uniform weights and zero biases.

    Args:
        spec: Network architecture
        seed: Stream seed

    Returns:
        NetWeights: Weights drawn uniform on [-a, a], a = sqrt(6 / (fan_in + fan_out))
    """
    rng = seed.generator()
    weights, biases = [], []
    for fan_in, fan_out in zip(spec.layer_widths[:-1], spec.layer_widths[1:]):
        bound = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return NetWeights(spec=spec, weights=weights, biases=biases)


def _activate(kind: Activation, z: FloatArray) -> FloatArray:
    if kind == Activation.TANH:
        return np.tanh(z)
    return z


def _activation_slope(kind: Activation, out: FloatArray) -> FloatArray:
    # derivative expressed through the activation's output
    if kind == Activation.TANH:
        return 1.0 - out * out
    return np.ones_like(out)


def _check_inputs(w: NetWeights, X: FloatArray) -> None:
    if X.ndim != 2 or X.shape[1] != w.spec.input_dim:
        raise DimensionMismatchError(
            f"network expects inputs of dimension {w.spec.input_dim}, got shape {X.shape}",
            expected=w.spec.input_dim,
            actual=X.shape[-1] if X.ndim else 0,
        )


def _forward(w: NetWeights, X: FloatArray) -> List[FloatArray]:
    outputs = [X]
    for weight, bias, kind in zip(w.weights, w.biases, w.spec.activations):
        outputs.append(_activate(kind, outputs[-1] @ weight.T + bias))
    return outputs


def net_forward_batch(w: NetWeights, X: FloatArray) -> FloatArray:
    """Apply the network to every row of X."""
    inputs = np.asarray(X, dtype=np.float64)
    _check_inputs(w, inputs)
    return _forward(w, inputs)[-1]


def net_forward(w: NetWeights, x: FloatArray) -> FloatArray:
    """Apply the network to a single input vector.

    Raises:
        DimensionMismatchError: If x does not have layer_widths[0] entries
    """
    inputs = np.asarray(x, dtype=np.float64)
    if inputs.ndim != 1:
        raise DimensionMismatchError(f"expected a vector, got shape {inputs.shape}")
    return net_forward_batch(w, inputs[None, :])[0]


def net_vjp_batch(
    w: NetWeights, X: FloatArray, upstream: FloatArray
) -> Tuple[NetWeights, FloatArray]:
    """Reverse-mode gradients of sum_i upstream_i . net(x_i).

    Args:
        w: Network weights
        X: Inputs, one row per example
        upstream: Cotangents, one row per example, width d_out

    Returns:
        Tuple of the weight gradient (summed over rows) and the per-row input gradient
    """
    inputs = np.asarray(X, dtype=np.float64)
    _check_inputs(w, inputs)
    cotangent = np.asarray(upstream, dtype=np.float64)
    if cotangent.shape != (inputs.shape[0], w.spec.output_dim):
        raise DimensionMismatchError(
            f"upstream must have shape {(inputs.shape[0], w.spec.output_dim)}, "
            f"got {cotangent.shape}",
            expected=w.spec.output_dim,
            actual=cotangent.shape[-1] if cotangent.ndim else 0,
        )

    outputs = _forward(w, inputs)
    grad_w: List[FloatArray] = [np.empty(0)] * w.spec.n_layers
    grad_b: List[FloatArray] = [np.empty(0)] * w.spec.n_layers
    g = cotangent
    for layer in reversed(range(w.spec.n_layers)):
        dz = g * _activation_slope(w.spec.activations[layer], outputs[layer + 1])
        grad_w[layer] = dz.T @ outputs[layer]
        grad_b[layer] = dz.sum(axis=0)
        g = dz @ w.weights[layer]
    return NetWeights(spec=w.spec, weights=grad_w, biases=grad_b), g


def net_vjp(
    w: NetWeights, x: FloatArray, upstream: FloatArray
) -> Tuple[NetWeights, FloatArray]:
    """Reverse-mode gradients of upstream . net(x) with respect to weights and x."""
    inputs = np.asarray(x, dtype=np.float64)
    cotangent = np.asarray(upstream, dtype=np.float64)
    if inputs.ndim != 1 or cotangent.ndim != 1:
        raise DimensionMismatchError("x and upstream must be vectors")
    grad_w, grad_x = net_vjp_batch(w, inputs[None, :], cotangent[None, :])
    return grad_w, grad_x[0]


def net_param_jacobian(w: NetWeights, X: FloatArray) -> FloatArray:
    """Per-row Jacobian of the outputs with respect to the flattened weights.

    Returns:
        Array of shape (N, d_out, n_params)
    """
    inputs = np.asarray(X, dtype=np.float64)
    _check_inputs(w, inputs)
    outputs = _forward(w, inputs)
    n = inputs.shape[0]
    jacobian = np.zeros((n, w.spec.output_dim, w.spec.n_params))

    for c in range(w.spec.output_dim):
        g = np.zeros((n, w.spec.output_dim))
        g[:, c] = 1.0
        blocks: List[FloatArray] = []
        for layer in reversed(range(w.spec.n_layers)):
            dz = g * _activation_slope(w.spec.activations[layer], outputs[layer + 1])
            per_row_w = dz[:, :, None] * outputs[layer][:, None, :]
            blocks.append(dz)
            blocks.append(per_row_w.reshape(n, -1))
            g = dz @ w.weights[layer]
        # blocks hold (b_L, W_L, ..., b_0, W_0); flattened order is W_0, b_0, W_1, ...
        jacobian[:, c, :] = np.concatenate(blocks[::-1], axis=1)
    return jacobian
