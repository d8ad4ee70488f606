#!/usr/bin/env python3
"""Train on states from a solve truncated at two cycles; accuracy matches.

The iterative forward solve can stop long before convergence: two cycles
give states accurate enough that the gradients steer training to the same
place as exact forward propagation. This runs both modes for one epoch on
a rendered-digit dataset written to (and read back from) IDX files, the
same container format the standard digit corpus ships in.
"""

import tempfile
import time

import numpy as np

from layermg import TrainConfig, evaluate, load_mnist_idx, random_network, train_epoch, write_digit_idx_files

TRAIN_N, TEST_N, DEPTH, WIDTH = 800, 400, 32, 16

with tempfile.TemporaryDirectory() as workdir:
    paths = write_digit_idx_files(workdir, TRAIN_N, TEST_N, seed=11)
    train_data = load_mnist_idx(paths["train_images"], paths["train_labels"])
    test_data = load_mnist_idx(paths["test_images"], paths["test_labels"])
print(f"dataset: {TRAIN_N} train / {TEST_N} test rendered digits, 28x28\n")

for mode, cycles in (("exact", 2), ("mg", 2)):
    net = random_network(DEPTH, WIDTH, seed=42, input_dim=784, horizon=1.0)
    cfg = TrainConfig(
        learning_rate=0.1, batch_size=16, epochs=1, mode=mode, mg_cycles=cycles, seed=7
    )
    start = time.perf_counter()
    stats = train_epoch(net, train_data, cfg, rng=np.random.default_rng(7))
    test_err = evaluate(net, test_data)
    elapsed = time.perf_counter() - start
    label = f"{mode} forward" + (f", {cycles} cycles" if mode == "mg" else "")
    print(
        f"{label:22s} mean loss {stats.mean_loss:.4f}   "
        f"test top-1 error {test_err:.4f}   ({elapsed:.1f}s)"
    )

print("\nSame experiment via the command line: layermg train --config <config.json>")
