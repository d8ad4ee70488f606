"""Seeded generators: solver test networks, rendered digit images, IDX files."""

from __future__ import annotations

import os
import struct

import numpy as np

from .kernels import dense_params
from .network import ResidualNetwork
from .training import Dataset, IMAGE_SIDE, NUM_CLASSES

# Standard solver-test distribution: block parameters vary smoothly with the
# relative layer position and the step size defaults to horizon/depth, so a
# deeper network refines the same underlying dynamics. That is the regime in
# which coarse levels model fine ones and cycle counts stay depth-independent.
DEFAULT_HORIZON = 4.0
DEFAULT_WEIGHT_SCALE = 1.0
DEFAULT_BIAS_SCALE = 0.2
_SMOOTH_MODES = 4  # constant plus three cosine harmonics across the layers


def random_network(
    depth: int,
    width: int,
    seed,
    *,
    horizon: float = DEFAULT_HORIZON,
    step_size: float | None = None,
    activation: str = "tanh",
    weight_scale: float = DEFAULT_WEIGHT_SCALE,
    bias_scale: float = DEFAULT_BIAS_SCALE,
    input_dim: int | None = None,
    num_classes: int = NUM_CLASSES,
) -> ResidualNetwork:
    """Dense residual network with seeded, layer-smooth Gaussian parameters.

    The same seed yields the same parameter curves at every depth; deeper
    networks just sample them more finely. Pass step_size explicitly to
    decouple it from the horizon.
    """
    rng = np.random.default_rng(seed)
    if input_dim is None:
        input_dim = width
    if step_size is None:
        step_size = horizon / depth
    opening = dense_params(
        rng.normal(0.0, 1.0 / np.sqrt(input_dim), (width, input_dim)),
        rng.normal(0.0, 0.05, width),
        "tanh",
    )
    w_coeff = [
        rng.normal(0.0, weight_scale / np.sqrt(width) / (k + 1), (width, width))
        for k in range(_SMOOTH_MODES)
    ]
    b_coeff = [rng.normal(0.0, bias_scale / (k + 1), width) for k in range(_SMOOTH_MODES)]
    blocks = []
    for n in range(depth):
        phase = np.pi * n / depth
        weights = sum(c * np.cos(k * phase) for k, c in enumerate(w_coeff))
        bias = sum(c * np.cos(k * phase) for k, c in enumerate(b_coeff))
        blocks.append(dense_params(weights, bias, activation))
    readout = dense_params(
        rng.normal(0.0, 1.0 / np.sqrt(width), (num_classes, width)),
        np.zeros(num_classes),
        "identity",
    )
    return ResidualNetwork(opening, blocks, step_size=step_size, readout=readout)


def random_sample(dim: int, seed) -> np.ndarray:
    """Seeded standard-normal input vector, independent of random_network."""
    return np.random.default_rng([7, seed] if np.isscalar(seed) else [7, *seed]).standard_normal(dim)


# --- rendered digit dataset -------------------------------------------------
#
# Seven-segment style glyphs on a 28x28 canvas, jittered by a couple of
# pixels and Gaussian noise. Clearly separable, so a one-epoch run gives a
# meaningful top-1 error without any real data on disk.

_GLYPH_H, _GLYPH_W, _STROKE = 22, 14, 3

_SEGMENT_BOXES = {
    "top": (0, _STROKE, 0, _GLYPH_W),
    "mid": ((_GLYPH_H - _STROKE) // 2, (_GLYPH_H + _STROKE) // 2, 0, _GLYPH_W),
    "bot": (_GLYPH_H - _STROKE, _GLYPH_H, 0, _GLYPH_W),
    "tl": (0, _GLYPH_H // 2 + 1, 0, _STROKE),
    "tr": (0, _GLYPH_H // 2 + 1, _GLYPH_W - _STROKE, _GLYPH_W),
    "bl": (_GLYPH_H // 2, _GLYPH_H, 0, _STROKE),
    "br": (_GLYPH_H // 2, _GLYPH_H, _GLYPH_W - _STROKE, _GLYPH_W),
}

_DIGIT_SEGMENTS = {
    0: ("top", "tl", "tr", "bl", "br", "bot"),
    1: ("tr", "br"),
    2: ("top", "tr", "mid", "bl", "bot"),
    3: ("top", "tr", "mid", "br", "bot"),
    4: ("tl", "tr", "mid", "br"),
    5: ("top", "tl", "mid", "br", "bot"),
    6: ("top", "tl", "mid", "bl", "br", "bot"),
    7: ("top", "tr", "br"),
    8: ("top", "mid", "bot", "tl", "tr", "bl", "br"),
    9: ("top", "tl", "tr", "mid", "br", "bot"),
}


def _glyph(digit: int) -> np.ndarray:
    canvas = np.zeros((_GLYPH_H, _GLYPH_W))
    for name in _DIGIT_SEGMENTS[digit]:
        r0, r1, c0, c1 = _SEGMENT_BOXES[name]
        canvas[r0:r1, c0:c1] = 1.0
    return canvas


def synthetic_digits(
    count: int, seed, *, noise: float = 0.12, max_shift: int = 2
) -> Dataset:
    """Seeded dataset of jittered seven-segment digits in [0, 1]."""
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, NUM_CLASSES, size=count)
    images = np.zeros((count, IMAGE_SIDE, IMAGE_SIDE))
    base_r = (IMAGE_SIDE - _GLYPH_H) // 2
    base_c = (IMAGE_SIDE - _GLYPH_W) // 2
    for i, label in enumerate(labels):
        dr, dc = rng.integers(-max_shift, max_shift + 1, size=2)
        r, c = base_r + dr, base_c + dc
        images[i, r : r + _GLYPH_H, c : c + _GLYPH_W] = _glyph(int(label))
        images[i] += rng.normal(0.0, noise, (IMAGE_SIDE, IMAGE_SIDE))
    np.clip(images, 0.0, 1.0, out=images)
    return Dataset(images, labels.astype(np.int64))


# --- IDX container writers --------------------------------------------------

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


def write_idx_images(path: str | os.PathLike, images: np.ndarray) -> None:
    """Write a big-endian IDX image file from float images in [0, 1]."""
    pixels = np.round(np.asarray(images) * 255.0).astype(np.uint8)
    count, rows, cols = pixels.shape
    with open(os.fspath(path), "wb") as fh:
        fh.write(struct.pack(">IIII", IDX_IMAGES_MAGIC, count, rows, cols))
        fh.write(pixels.tobytes())


def write_idx_labels(path: str | os.PathLike, labels: np.ndarray) -> None:
    with open(os.fspath(path), "wb") as fh:
        fh.write(struct.pack(">II", IDX_LABELS_MAGIC, len(labels)))
        fh.write(np.asarray(labels, dtype=np.uint8).tobytes())


def write_digit_idx_files(
    directory: str | os.PathLike, train_count: int, test_count: int, seed
) -> dict[str, str]:
    """Render digit datasets and store them as the four standard IDX files."""
    directory = os.fspath(directory)
    os.makedirs(directory, exist_ok=True)
    train = synthetic_digits(train_count, [seed, 0])
    test = synthetic_digits(test_count, [seed, 1])
    paths = {
        "train_images": os.path.join(directory, "train-images-idx3-ubyte"),
        "train_labels": os.path.join(directory, "train-labels-idx1-ubyte"),
        "test_images": os.path.join(directory, "t10k-images-idx3-ubyte"),
        "test_labels": os.path.join(directory, "t10k-labels-idx1-ubyte"),
    }
    write_idx_images(paths["train_images"], train.images)
    write_idx_labels(paths["train_labels"], train.labels)
    write_idx_images(paths["test_images"], test.images)
    write_idx_labels(paths["test_labels"], test.labels)
    return paths
