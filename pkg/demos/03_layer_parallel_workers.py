#!/usr/bin/env python3
"""Blocks of layers relax concurrently; the answer never depends on workers.

F sweeps touch disjoint layer ranges, one owner per block, so they can run
on any number of workers. C sweeps move each block's last state across the
boundary, as one explicit message per cross-partition edge. The checksum of
the solved states is identical for every worker count; speed depends on
your core count (block work here is small, so don't expect much).
"""

import hashlib
import time

from layermg import build_hierarchy, make_partition, random_network, random_sample, solve, source_from_input

DEPTH, WIDTH, COARSENING = 512, 32, 4

net = random_network(DEPTH, WIDTH, seed=1)
source = source_from_input(net, random_sample(WIDTH, 1))
hierarchy = build_hierarchy(net, COARSENING)

partition = make_partition(DEPTH, COARSENING, 4)
print(f"{DEPTH} layers -> {partition.num_blocks} blocks of {COARSENING}")
print(f"4-worker assignment: cross-partition edges at blocks {partition.cross_edges()}\n")

print("workers   seconds   checksum")
digests = []
for workers in (1, 2, 4, 8):
    start = time.perf_counter()
    states, report = solve(hierarchy, source, tol=1e-9, max_cycles=50, workers=workers)
    elapsed = time.perf_counter() - start
    digest = hashlib.sha256(states.tobytes()).hexdigest()
    digests.append(digest)
    print(f"{workers:7d}   {elapsed:7.3f}   {digest[:16]}...")

print(f"\nall checksums identical: {len(set(digests)) == 1}")
print("Same experiment with CSV output: layermg scale --workers 1,2,4,8 --out scale.csv")
