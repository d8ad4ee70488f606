"""MNIST-style data ingestion, loss/gradients, and the epoch loop.

Gradients are standard reverse-mode through the layer recursion, linearized
at whatever states the caller supplies. Converged states give exact
gradients; states from a solve truncated after a couple of cycles give the
cheap approximate gradients used for early-stopped training. The backward
pass itself is always sequential.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, IdxParseError
from .kernels import Array, transform_vjp
from .multigrid import MgHierarchy, build_hierarchy, solve
from .network import (
    ResidualNetwork,
    check_states,
    output_state,
    readout_logits,
    sequential_forward,
    source_from_input,
)

IMAGE_SIDE = 28
NUM_CLASSES = 10

_IMAGES_MAGIC = 0x00000803
_LABELS_MAGIC = 0x00000801


@dataclass
class Dataset:
    """Grey-scale images in [0, 1] with integer class labels."""

    images: Array  # (count, 28, 28)
    labels: Array  # (count,)

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.images.ndim != 3 or self.images.shape[1:] != (IMAGE_SIDE, IMAGE_SIDE):
            raise ValueError(f"images must be (count, {IMAGE_SIDE}, {IMAGE_SIDE})")
        if len(self.images) != len(self.labels):
            raise ValueError(
                f"{len(self.images)} images but {len(self.labels)} labels"
            )
        if self.images.min() < 0.0 or self.images.max() > 1.0:
            raise ValueError("pixel values must lie in [0, 1]")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= NUM_CLASSES):
            raise ValueError(f"labels must lie in [0, {NUM_CLASSES})")

    def __len__(self) -> int:
        return len(self.images)

    def subset(self, count: int) -> "Dataset":
        return Dataset(self.images[:count], self.labels[:count])


def _read_be_u32(data: bytes, offset: int, path: str) -> int:
    if len(data) < offset + 4:
        raise IdxParseError(f"{path}: truncated while reading header field", len(data))
    return int.from_bytes(data[offset : offset + 4], "big")


def load_mnist_idx(images_path: str | os.PathLike, labels_path: str | os.PathLike) -> Dataset:
    """Load an IDX image/label file pair, validating headers byte-by-byte.

    Image files must carry magic 0x00000803 and 28x28 rasters; label files
    magic 0x00000801. Pixels come back scaled by 1/255. Any malformed or
    truncated structure raises IdxParseError naming the failing byte offset.
    """
    images_path, labels_path = os.fspath(images_path), os.fspath(labels_path)
    with open(images_path, "rb") as fh:
        img_data = fh.read()
    with open(labels_path, "rb") as fh:
        lbl_data = fh.read()

    magic = _read_be_u32(img_data, 0, images_path)
    if magic != _IMAGES_MAGIC:
        raise IdxParseError(
            f"{images_path}: bad image magic 0x{magic:08x}, expected 0x{_IMAGES_MAGIC:08x}", 0
        )
    count = _read_be_u32(img_data, 4, images_path)
    rows = _read_be_u32(img_data, 8, images_path)
    cols = _read_be_u32(img_data, 12, images_path)
    if rows != IMAGE_SIDE:
        raise IdxParseError(f"{images_path}: image rows {rows}, expected {IMAGE_SIDE}", 8)
    if cols != IMAGE_SIDE:
        raise IdxParseError(f"{images_path}: image cols {cols}, expected {IMAGE_SIDE}", 12)
    pixel_bytes = count * rows * cols
    if len(img_data) < 16 + pixel_bytes:
        raise IdxParseError(
            f"{images_path}: file ends inside pixel data, expected {16 + pixel_bytes} bytes",
            len(img_data),
        )

    magic = _read_be_u32(lbl_data, 0, labels_path)
    if magic != _LABELS_MAGIC:
        raise IdxParseError(
            f"{labels_path}: bad label magic 0x{magic:08x}, expected 0x{_LABELS_MAGIC:08x}", 0
        )
    lbl_count = _read_be_u32(lbl_data, 4, labels_path)
    if lbl_count != count:
        raise IdxParseError(
            f"{labels_path}: {lbl_count} labels for {count} images", 4
        )
    if len(lbl_data) < 8 + count:
        raise IdxParseError(
            f"{labels_path}: file ends inside label data, expected {8 + count} bytes",
            len(lbl_data),
        )

    images = (
        np.frombuffer(img_data, dtype=np.uint8, count=pixel_bytes, offset=16)
        .reshape(count, rows, cols)
        .astype(np.float64)
        / 255.0
    )
    labels = np.frombuffer(lbl_data, dtype=np.uint8, count=count, offset=8).astype(np.int64)
    bad = np.nonzero(labels >= NUM_CLASSES)[0]
    if bad.size:
        raise IdxParseError(
            f"{labels_path}: label value {labels[bad[0]]} out of range", 8 + int(bad[0])
        )
    return Dataset(images, labels)


@dataclass
class TrainConfig:
    learning_rate: float
    batch_size: int
    epochs: int
    mode: str = "mg"
    mg_cycles: int = 2
    coarsening: int = 4
    seed: int = 0
    # with max_cycles doing the early stopping, the tolerance only lets
    # already-converged solves return sooner
    solve_tol: float = 1e-12

    def __post_init__(self):
        if self.mode not in ("mg", "exact"):
            raise ConfigurationError(f"mode must be 'mg' or 'exact', got {self.mode!r}")
        if self.mg_cycles < 1:
            raise ConfigurationError(f"mg_cycles must be >= 1, got {self.mg_cycles}")
        # learning_rate 0 is allowed: it turns the epoch into a pure evaluation pass
        if self.learning_rate < 0 or self.batch_size < 1 or self.epochs < 1:
            raise ConfigurationError("learning_rate must be >= 0, batch_size/epochs >= 1")


@dataclass
class Gradients:
    """Per-parameter gradients mirroring a network's transforms."""

    opening: tuple[Array, Array]
    blocks: list[tuple[Array, Array]]
    readout: tuple[Array, Array]

    @staticmethod
    def zeros_like(net: ResidualNetwork) -> "Gradients":
        zero = lambda tp: (np.zeros_like(tp.weights), np.zeros_like(tp.bias))
        return Gradients(zero(net.opening), [zero(b) for b in net.blocks], zero(net.readout))

    def _pairs(self):
        yield self.opening
        yield from self.blocks
        yield self.readout

    def accumulate(self, other: "Gradients") -> None:
        for (w, b), (ow, ob) in zip(self._pairs(), other._pairs()):
            w += ow
            b += ob

    def scale(self, factor: float) -> None:
        for w, b in self._pairs():
            w *= factor
            b *= factor


def _loss_and_dlogits(logits: Array, label: int) -> tuple[float, Array]:
    shifted = logits - logits.max()
    log_norm = np.log(np.sum(np.exp(shifted)))
    loss = float(log_norm - shifted[label])
    dlogits = np.exp(shifted - log_norm)
    dlogits[label] -= 1.0
    return loss, dlogits


def loss_and_grad(
    net: ResidualNetwork, states: Array, sample: Array, label: int
) -> tuple[float, Gradients]:
    """Softmax cross-entropy and its gradients for one sample.

    The backward pass traverses the recursion in reverse using the supplied
    states as linearization points, so it works equally for exact states and
    early-stopped approximations. ``sample`` is the raw input the opening
    transform saw; it is needed for the opening-layer gradient.
    """
    if not 0 <= label < net.readout.output_width:
        raise ValueError(f"label {label} out of range [0, {net.readout.output_width})")
    states = check_states(net, states)
    sample = np.asarray(sample, dtype=np.float64).ravel()
    h = net.step_size

    final = output_state(net, states)
    logits = readout_logits(net, final)
    loss, dlogits = _loss_and_dlogits(logits, label)
    g_final, gw_read, gb_read = transform_vjp(net.readout, final, dlogits)

    block_grads: list[tuple[Array, Array]] = [None] * net.num_blocks
    # final = u^{N-1} + h*F(u^{N-1}; last block)
    gu, gw, gb = transform_vjp(net.blocks[-1], states[-1], g_final)
    block_grads[-1] = (h * gw, h * gb)
    g_state = g_final + h * gu
    # u^n = u^{n-1} + h*F(u^{n-1}; block n-1) for n = N-1 .. 1
    for n in range(len(states) - 1, 0, -1):
        gu, gw, gb = transform_vjp(net.blocks[n - 1], states[n - 1], g_state)
        block_grads[n - 1] = (h * gw, h * gb)
        g_state = g_state + h * gu
    # u^0 = opening(sample)
    _, gw_open, gb_open = transform_vjp(net.opening, sample, g_state)
    return loss, Gradients((gw_open, gb_open), block_grads, (gw_read, gb_read))


def sgd_update(net: ResidualNetwork, grads: Gradients, learning_rate: float) -> None:
    """Plain in-place SGD step; aliased coarse-level parameters follow along."""
    transforms = [net.opening, *net.blocks, net.readout]
    pairs = [grads.opening, *grads.blocks, grads.readout]
    for tp, (gw, gb) in zip(transforms, pairs):
        tp.weights -= learning_rate * gw
        tp.bias -= learning_rate * gb


def forward_states(
    net: ResidualNetwork, sample: Array, cfg: TrainConfig, hierarchy: MgHierarchy | None
) -> Array:
    source = source_from_input(net, sample)
    if cfg.mode == "exact":
        return sequential_forward(net, source)
    states, _ = solve(hierarchy, source, tol=cfg.solve_tol, max_cycles=cfg.mg_cycles)
    return states


@dataclass
class EpochStats:
    mean_loss: float
    top1_error: float


def train_epoch(
    net: ResidualNetwork,
    data: Dataset,
    cfg: TrainConfig,
    rng: np.random.Generator | None = None,
    hierarchy: MgHierarchy | None = None,
) -> EpochStats:
    """One SGD epoch over shuffled batches, updating the network in place.

    Forward states come from the truncated multigrid solve in "mg" mode or
    from sequential propagation in "exact" mode. Deterministic for a given
    rng state. Returns the mean sample loss and the top-1 error measured on
    the training forward passes themselves.
    """
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    if cfg.mode == "mg" and hierarchy is None:
        hierarchy = build_hierarchy(net, cfg.coarsening)
    order = rng.permutation(len(data))
    losses = np.empty(len(data))
    hits = 0
    for lo in range(0, len(order), cfg.batch_size):
        batch = order[lo : lo + cfg.batch_size]
        total = Gradients.zeros_like(net)
        for pos, idx in enumerate(batch):
            sample = data.images[idx].ravel()
            label = int(data.labels[idx])
            states = forward_states(net, sample, cfg, hierarchy)
            loss, grads = loss_and_grad(net, states, sample, label)
            losses[lo + pos] = loss
            hits += int(np.argmax(readout_logits(net, output_state(net, states))) == label)
            total.accumulate(grads)
        total.scale(1.0 / len(batch))
        sgd_update(net, total, cfg.learning_rate)
    return EpochStats(float(losses.mean()), 1.0 - hits / len(data))


def evaluate(net: ResidualNetwork, data: Dataset) -> float:
    """Top-1 error under exact sequential propagation."""
    wrong = 0
    for image, label in zip(data.images, data.labels):
        source = source_from_input(net, image.ravel())
        states = sequential_forward(net, source)
        logits = readout_logits(net, output_state(net, states))
        wrong += int(np.argmax(logits) != label)
    return wrong / len(data)
