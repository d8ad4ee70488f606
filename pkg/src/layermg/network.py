"""Residual networks viewed as layer-indexed propagation systems.

A network of N residual blocks carries states u^0..u^{N-1}: u^0 is the
opened input and u^n = u^{n-1} + h*F(u^{n-1}; block n-1) for n >= 1. With a
per-layer source term f the same recursion reads

    u^0 = f[0],      u^n = f[n] + (u^{n-1} + h*F(u^{n-1}))

and solving it directly is `sequential_forward`, the oracle every iterative
solver in this package is checked against. `propagation_operator` evaluates
the left-hand side of that system so that residuals can be formed.

Any object with ``blocks`` and ``step_size`` attributes (a ResidualNetwork
or a coarse multigrid level) is accepted wherever a ``system`` argument is
documented.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DimensionError
from .kernels import Array, TransformParams, apply_transform


@dataclass
class ResidualNetwork:
    """Opening transform, N width-preserving residual blocks, readout."""

    opening: TransformParams
    blocks: list[TransformParams]
    readout: TransformParams
    step_size: float = 1.0

    def __post_init__(self):
        self.step_size = float(self.step_size)
        # step_size 0 is allowed: it degenerates every block to the identity.
        if not np.isfinite(self.step_size) or self.step_size < 0.0:
            raise ConfigurationError(f"step_size must be finite and >= 0, got {self.step_size}")
        if len(self.blocks) < 1:
            raise ConfigurationError("a residual network needs at least one block")
        q = self.opening.output_width
        for i, blk in enumerate(self.blocks):
            if blk.input_width != q or blk.output_width != q:
                raise DimensionError(
                    f"block {i} maps width {blk.input_width} -> {blk.output_width}, "
                    f"but must preserve width {q}"
                )
        if self.readout.input_width != q:
            raise DimensionError(
                f"readout expects width {self.readout.input_width}, network width is {q}"
            )

    @property
    def num_blocks(self) -> int:
        return len(self.blocks)

    @property
    def width(self) -> int:
        return self.blocks[0].input_width


def system_shape(system) -> tuple[int, int]:
    """(number of layer states, state width) of a network or multigrid level."""
    return len(system.blocks), system.blocks[0].input_width


def check_states(system, arr, name: str = "states") -> Array:
    n, q = system_shape(system)
    arr = np.asarray(arr, dtype=np.float64)
    if arr.shape != (n, q):
        raise DimensionError(f"{name} must have shape ({n}, {q}), got {arr.shape}")
    return arr


def source_from_input(net: ResidualNetwork, sample: Array) -> Array:
    """Source array for one sample: row 0 is the opened input, the rest zero."""
    n, q = system_shape(net)
    f = np.zeros((n, q))
    f[0] = apply_transform(net.opening, np.asarray(sample, dtype=np.float64))
    return f


def propagate_values(system, u_start: Array, source: Array, start: int, stop: int) -> Array:
    """States u^start..u^{stop-1} propagated from u_start = u^{start-1}.

    This is the one place the recursion arithmetic lives; relaxation sweeps,
    the sequential solver and the residual evaluation all share it so that a
    recomputed row reproduces the stored row bit for bit.
    """
    blocks, h = system.blocks, system.step_size
    out = np.empty((stop - start, len(u_start)))
    u = u_start
    for j in range(start, stop):
        fv = apply_transform(blocks[j - 1], u)
        u = source[j] + (u + h * fv)
        out[j - start] = u
    return out


def propagate_span(system, states: Array, source: Array, start: int, stop: int) -> None:
    """In-place forward propagation of states[start:stop] from states[start-1]."""
    if stop > start:
        states[start:stop] = propagate_values(system, states[start - 1], source, start, stop)


def sequential_forward(system, source: Array) -> Array:
    """Solve the propagation system exactly by forward substitution.

    With source rows 1.. equal to zero this is classic residual-network
    forward propagation; nonzero rows make it the direct solver for coarse
    multigrid systems.
    """
    source = check_states(system, source, "source")
    n, q = system_shape(system)
    states = np.empty((n, q))
    states[0] = source[0]
    propagate_span(system, states, source, 1, n)
    return states


def propagation_operator(system, states: Array) -> Array:
    """Left-hand side of the propagation system.

    Row 0 is u^0; row n is u^n - (u^{n-1} + h*F(u^{n-1})). A state array
    returned by sequential_forward maps back to its source.
    """
    states = check_states(system, states)
    blocks, h = system.blocks, system.step_size
    out = np.empty_like(states)
    out[0] = states[0]
    for j in range(1, len(states)):
        fv = apply_transform(blocks[j - 1], states[j - 1])
        out[j] = states[j] - (states[j - 1] + h * fv)
    return out


def output_state(net: ResidualNetwork, states: Array) -> Array:
    """Network output: the last residual block applied to the last state."""
    last = np.asarray(states[-1], dtype=np.float64)
    return last + net.step_size * apply_transform(net.blocks[-1], last)


def readout_logits(net: ResidualNetwork, last_state: Array) -> Array:
    """Map a final state to class logits through the readout transform."""
    return apply_transform(net.readout, last_state)


def forward_logits(net: ResidualNetwork, states: Array) -> Array:
    return readout_logits(net, output_state(net, states))


# --- serialization ---------------------------------------------------------
#
# A network is stored as <path>.json (structure) plus <path>.bin, the raw
# little-endian float64 concatenation of every parameter array in declaration
# order: opening weights, opening bias, each block's weights and bias, readout
# weights, readout bias. The round-trip is bit-exact.

_FORMAT_NAME = "layermg-network"


def _transform_meta(tp: TransformParams) -> dict:
    meta = {"kind": tp.kind, "activation": tp.activation}
    if tp.kind == "dense":
        meta["out_width"] = int(tp.weights.shape[0])
        meta["in_width"] = int(tp.weights.shape[1])
    else:
        k, _, c_in, c_out = tp.weights.shape
        meta.update(
            kernel=int(k),
            in_channels=int(c_in),
            out_channels=int(c_out),
            height=int(tp.height),
            width=int(tp.width),
        )
    return meta


def _transform_shapes(meta: dict) -> tuple[tuple[int, ...], tuple[int, ...]]:
    if meta["kind"] == "dense":
        return (meta["out_width"], meta["in_width"]), (meta["out_width"],)
    k = meta["kernel"]
    return (k, k, meta["in_channels"], meta["out_channels"]), (meta["out_channels"],)


def _transform_from_meta(meta: dict, weights: Array, bias: Array) -> TransformParams:
    if meta["kind"] == "dense":
        return TransformParams("dense", weights, bias, meta["activation"])
    return TransformParams(
        "conv2d", weights, bias, meta["activation"], height=meta["height"], width=meta["width"]
    )


def save_network(net: ResidualNetwork, path: str | os.PathLike) -> None:
    """Write ``<path>.json`` and ``<path>.bin`` describing the network."""
    base = os.fspath(path)
    transforms = [net.opening, *net.blocks, net.readout]
    meta = {
        "format": _FORMAT_NAME,
        "version": 1,
        "step_size": net.step_size,
        "num_blocks": net.num_blocks,
        "opening": _transform_meta(net.opening),
        "blocks": [_transform_meta(b) for b in net.blocks],
        "readout": _transform_meta(net.readout),
    }
    blob = np.concatenate([np.concatenate([t.weights.ravel(), t.bias.ravel()]) for t in transforms])
    with open(base + ".json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2)
        fh.write("\n")
    blob.astype("<f8").tofile(base + ".bin")


def load_network(path: str | os.PathLike) -> ResidualNetwork:
    base = os.fspath(path)
    with open(base + ".json", encoding="utf-8") as fh:
        meta = json.load(fh)
    if meta.get("format") != _FORMAT_NAME:
        raise ConfigurationError(f"{base}.json is not a {_FORMAT_NAME} file")
    flat = np.fromfile(base + ".bin", dtype="<f8").astype(np.float64)
    metas = [meta["opening"], *meta["blocks"], meta["readout"]]
    expected = sum(int(np.prod(ws)) + int(np.prod(bs)) for ws, bs in map(_transform_shapes, metas))
    if flat.size != expected:
        raise ConfigurationError(
            f"{base}.bin holds {flat.size} values, structure requires {expected}"
        )
    transforms = []
    cursor = 0
    for m in metas:
        w_shape, b_shape = _transform_shapes(m)
        w_size, b_size = int(np.prod(w_shape)), int(np.prod(b_shape))
        weights = flat[cursor : cursor + w_size].reshape(w_shape)
        cursor += w_size
        bias = flat[cursor : cursor + b_size].reshape(b_shape)
        cursor += b_size
        transforms.append(_transform_from_meta(m, weights.copy(), bias.copy()))
    opening, *blocks_and_readout = transforms
    return ResidualNetwork(
        opening=opening,
        blocks=blocks_and_readout[:-1],
        step_size=meta["step_size"],
        readout=blocks_and_readout[-1],
    )
