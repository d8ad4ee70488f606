#!/usr/bin/env python3
"""Solve one network's forward pass two ways and watch the residual fall.

Classic forward propagation walks through the layers one after another.
Here the same states are treated as unknowns of a layer-indexed system and
obtained iteratively: relax blocks of layers, correct through a coarse
level, repeat. The two answers agree to solver tolerance.
"""

import numpy as np

from layermg import (
    build_hierarchy,
    random_network,
    random_sample,
    sequential_forward,
    solve,
    source_from_input,
)

DEPTH, WIDTH, COARSENING = 128, 16, 4

net = random_network(DEPTH, WIDTH, seed=0)
sample = random_sample(WIDTH, seed=0)
source = source_from_input(net, sample)

print(f"network: {DEPTH} residual blocks, width {WIDTH}, step size {net.step_size:.4f}")

# the oracle: plain layer-by-layer propagation
oracle = sequential_forward(net, source)

# the iterative route: a two-level hierarchy coarsened by 4
hierarchy = build_hierarchy(net, COARSENING)
sizes = " -> ".join(str(lev.num_layers) for lev in hierarchy.levels)
print(f"hierarchy levels: {sizes} layers")

states, report = solve(hierarchy, source, tol=1e-9, max_cycles=50)

print("\ncycle   residual L2")
for cycle, norm in enumerate(report.residual_norms):
    print(f"{cycle:5d}   {norm:.3e}")

err = np.max(np.abs(states - oracle))
print(f"\nconverged: {report.converged} after {report.cycles_used} cycles")
print(f"max |multigrid - sequential| over all {DEPTH}x{WIDTH} state entries: {err:.3e}")
