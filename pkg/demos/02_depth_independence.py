#!/usr/bin/env python3
"""Cycle counts to a fixed residual tolerance barely move as depth grows.

Each depth samples the same underlying parameter curves more finely (the
step size shrinks as 1/depth), so the coarse level stays a faithful model
of the fine one and the iteration count is governed by the dynamics, not by
the layer count. 16x deeper, same handful of cycles.
"""

from layermg import build_hierarchy, random_network, random_sample, solve, source_from_input

WIDTH, COARSENING, TOL = 16, 4, 1e-9

print(f"width {WIDTH}, coarsening {COARSENING}, tolerance {TOL:.0e}\n")
print("depth   cycles   final residual   history")
for depth in (64, 128, 256, 512, 1024):
    net = random_network(depth, WIDTH, seed=[0, depth, WIDTH])
    source = source_from_input(net, random_sample(WIDTH, [0, depth, WIDTH]))
    _, report = solve(build_hierarchy(net, COARSENING), source, tol=TOL, max_cycles=50)
    history = " ".join(f"{n:.1e}" for n in report.residual_norms)
    print(f"{depth:5d}   {report.cycles_used:6d}   {report.residual_norms[-1]:14.3e}   {history}")

print("\nSame command-line experiment: layermg converge --depths 64,256,1024 --tol 1e-9")
