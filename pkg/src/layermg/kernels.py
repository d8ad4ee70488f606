"""Dense and small-convolution transform kernels.

Everything operates on flat float64 state vectors. A state of width q is
either a plain vector (dense transforms) or a raveled (channels, height,
width) raster (conv2d transforms). All functions are pure and safe to call
from any number of threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigurationError, DimensionError

Array = np.ndarray

# conv2d is fixed at stride 1 with one ring of zero padding, so a 3x3 kernel
# preserves the raster and u + h*F(u) stays well-formed.
CONV_PADDING = 1

ACTIVATIONS: dict[str, Callable[[Array], Array]] = {
    "relu": lambda pre: np.maximum(pre, 0.0),
    "tanh": np.tanh,
    "identity": lambda pre: pre,
}


def _relu_deriv(pre: Array) -> Array:
    return (pre > 0.0).astype(np.float64)


def _tanh_deriv(pre: Array) -> Array:
    t = np.tanh(pre)
    return 1.0 - t * t


def _identity_deriv(pre: Array) -> Array:
    return np.ones_like(pre)


ACTIVATION_DERIVS: dict[str, Callable[[Array], Array]] = {
    "relu": _relu_deriv,
    "tanh": _tanh_deriv,
    "identity": _identity_deriv,
}


@dataclass
class TransformParams:
    """Parameters of one feature transform, activation(W u + b).

    kind "dense": weights has shape (out_width, in_width), bias (out_width,).
    kind "conv2d": weights has shape (k, k, in_channels, out_channels), bias
    (out_channels,), and the input vector is a raveled raster of shape
    (in_channels, height, width).
    """

    kind: str
    weights: Array
    bias: Array
    activation: str = "tanh"
    height: int | None = None
    width: int | None = None
    input_width: int = field(init=False, repr=False)
    output_width: int = field(init=False, repr=False)

    def __post_init__(self):
        if self.kind not in ("dense", "conv2d"):
            raise ConfigurationError(f"unknown transform kind {self.kind!r}")
        if self.activation not in ACTIVATIONS:
            raise ConfigurationError(f"unknown activation {self.activation!r}")
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.kind == "dense":
            if self.weights.ndim != 2:
                raise DimensionError("dense weights must be 2-D")
            if self.bias.shape != (self.weights.shape[0],):
                raise DimensionError("dense bias must match weight rows")
            self.input_width = self.weights.shape[1]
            self.output_width = self.weights.shape[0]
        else:
            if self.weights.ndim != 4 or self.weights.shape[0] != self.weights.shape[1]:
                raise DimensionError("conv2d weights must be (k, k, c_in, c_out)")
            k, _, c_in, c_out = self.weights.shape
            if self.bias.shape != (c_out,):
                raise DimensionError("conv2d bias must have one entry per output channel")
            if self.height is None or self.width is None:
                raise ConfigurationError("conv2d transform needs height and width")
            out_h = self.height + 2 * CONV_PADDING - k + 1
            out_w = self.width + 2 * CONV_PADDING - k + 1
            if out_h < 1 or out_w < 1:
                raise DimensionError("conv2d kernel larger than padded raster")
            self.input_width = c_in * self.height * self.width
            self.output_width = c_out * out_h * out_w


def dense_params(weights: Array, bias: Array, activation: str = "tanh") -> TransformParams:
    return TransformParams("dense", weights, bias, activation)


def conv2d_params(
    weights: Array, bias: Array, activation: str, height: int, width: int
) -> TransformParams:
    return TransformParams("conv2d", weights, bias, activation, height=height, width=width)


def _conv_geometry(params: TransformParams) -> tuple[int, int, int, int, int]:
    k = params.weights.shape[0]
    c_in, c_out = params.weights.shape[2], params.weights.shape[3]
    out_h = params.height + 2 * CONV_PADDING - k + 1
    out_w = params.width + 2 * CONV_PADDING - k + 1
    return k, c_in, c_out, out_h, out_w


def _im2col(padded: Array, k: int) -> Array:
    # padded: (c, hp, wp) -> (out_h*out_w, c*k*k) patch matrix
    win = np.lib.stride_tricks.sliding_window_view(padded, (k, k), axis=(1, 2))
    c, out_h, out_w = win.shape[:3]
    return win.transpose(1, 2, 0, 3, 4).reshape(out_h * out_w, c * k * k)


def _weight_matrix(params: TransformParams) -> Array:
    k, c_in, c_out, _, _ = _conv_geometry(params)
    return params.weights.transpose(3, 2, 0, 1).reshape(c_out, c_in * k * k)


def _conv2d_pre(params: TransformParams, u: Array) -> Array:
    k, c_in, c_out, out_h, out_w = _conv_geometry(params)
    raster = u.reshape(c_in, params.height, params.width)
    padded = np.pad(raster, ((0, 0), (CONV_PADDING, CONV_PADDING), (CONV_PADDING, CONV_PADDING)))
    cols = _im2col(padded, k)
    pre = cols @ _weight_matrix(params).T + params.bias
    return pre.reshape(out_h, out_w, c_out).transpose(2, 0, 1).ravel()


def apply_transform(params: TransformParams, u: Array) -> Array:
    """Evaluate activation(W u + b) (dense) or activation(conv(u) + b) (conv2d)."""
    u = np.asarray(u, dtype=np.float64)
    if u.shape != (params.input_width,):
        raise DimensionError(
            f"transform expects a vector of width {params.input_width}, got shape {u.shape}"
        )
    if params.kind == "dense":
        pre = params.weights @ u + params.bias
    else:
        pre = _conv2d_pre(params, u)
    return ACTIVATIONS[params.activation](pre)


def transform_vjp(params: TransformParams, u: Array, grad_out: Array) -> tuple[Array, Array, Array]:
    """Vector-Jacobian products of apply_transform.

    Given d(loss)/d(output) in grad_out, returns (d/du, d/dweights, d/dbias)
    with the weight gradient shaped like params.weights.
    """
    u = np.asarray(u, dtype=np.float64)
    grad_out = np.asarray(grad_out, dtype=np.float64)
    if u.shape != (params.input_width,):
        raise DimensionError(f"expected input width {params.input_width}, got {u.shape}")
    if grad_out.shape != (params.output_width,):
        raise DimensionError(f"expected gradient width {params.output_width}, got {grad_out.shape}")
    deriv = ACTIVATION_DERIVS[params.activation]
    if params.kind == "dense":
        pre = params.weights @ u + params.bias
        gp = grad_out * deriv(pre)
        return params.weights.T @ gp, np.outer(gp, u), gp

    k, c_in, c_out, out_h, out_w = _conv_geometry(params)
    raster = u.reshape(c_in, params.height, params.width)
    padded = np.pad(raster, ((0, 0), (CONV_PADDING, CONV_PADDING), (CONV_PADDING, CONV_PADDING)))
    cols = _im2col(padded, k)
    wmat = _weight_matrix(params)
    pre = cols @ wmat.T + params.bias
    gp = grad_out.reshape(c_out, out_h, out_w).transpose(1, 2, 0).reshape(-1, c_out) * deriv(pre)
    g_wmat = gp.T @ cols
    g_weights = g_wmat.reshape(c_out, c_in, k, k).transpose(2, 3, 1, 0)
    g_bias = gp.sum(axis=0)
    g_cols = (gp @ wmat).reshape(out_h, out_w, c_in, k, k)
    g_padded = np.zeros_like(padded)
    for di in range(k):
        for dj in range(k):
            g_padded[:, di : di + out_h, dj : dj + out_w] += g_cols[:, :, :, di, dj].transpose(2, 0, 1)
    p = CONV_PADDING
    g_u = g_padded[:, p : p + params.height, p : p + params.width].ravel()
    return g_u, g_weights, g_bias


def l2_norm(x) -> float:
    """Euclidean norm over every entry of x, whatever its shape."""
    v = np.asarray(x, dtype=np.float64).ravel()
    return float(np.sqrt(v @ v))
