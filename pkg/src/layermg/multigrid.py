"""Nonlinear full-approximation multigrid over the layer dimension.

Coarsening keeps every c-th layer: those C-layers form the next level, whose
block parameters are the fine parameters at the kept indices and whose step
size is c*h. One cycle runs FCF relaxation, injects the residual and the
current iterate to the coarse level, solves the coarse full-approximation
system (recursively, or exactly by forward substitution on the coarsest
level), and adds the resulting correction back at the C-layers. Residual
norms are plain L2 over all N*q entries, no normalization.
"""

from __future__ import annotations

import csv
import io
import math
import os
from concurrent.futures import Executor, ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DimensionError
from .kernels import Array, TransformParams, l2_norm
from .network import (
    ResidualNetwork,
    check_states,
    propagate_values,
    propagation_operator,
    sequential_forward,
    system_shape,
)
from .parallel import (
    BlockPartition,
    ExchangeTracker,
    exchange_and_c_relax,
    make_partition,
    parallel_f_relax,
)

DEFAULT_TOL = 1e-9
DEFAULT_MAX_CYCLES = 50


@dataclass
class MgLevel:
    """One level of the hierarchy: step size and per-layer block parameters."""

    step_size: float
    blocks: list[TransformParams]

    @property
    def num_layers(self) -> int:
        return len(self.blocks)

    @property
    def width(self) -> int:
        return self.blocks[0].input_width


@dataclass
class MgHierarchy:
    levels: list[MgLevel]
    coarsening_factor: int
    coarsest_direct_threshold: int

    @property
    def num_levels(self) -> int:
        return len(self.levels)

    @property
    def fine(self) -> MgLevel:
        return self.levels[0]


def build_hierarchy(
    net: ResidualNetwork | MgLevel, coarsening: int, threshold: int | None = None
) -> MgHierarchy:
    """Coarsen by keeping every ``coarsening``-th layer until the level is small.

    Layer counts must divide exactly at every step; there is no padding. The
    default threshold N // coarsening yields a two-level hierarchy. Coarse
    levels alias the fine parameter arrays, so in-place parameter updates
    (training) never require a rebuild.
    """
    if int(coarsening) != coarsening or coarsening < 2:
        raise ConfigurationError(f"coarsening factor must be an integer >= 2, got {coarsening}")
    coarsening = int(coarsening)
    n = len(net.blocks)
    if threshold is None:
        threshold = max(1, n // coarsening)
    if threshold < 1:
        raise ConfigurationError(f"coarsest-level threshold must be >= 1, got {threshold}")
    levels = [MgLevel(net.step_size, list(net.blocks))]
    while levels[-1].num_layers > threshold:
        fine = levels[-1]
        if fine.num_layers % coarsening != 0:
            raise ConfigurationError(
                f"cannot coarsen {fine.num_layers} layers by factor {coarsening}"
            )
        levels.append(MgLevel(fine.step_size * coarsening, fine.blocks[::coarsening]))
    return MgHierarchy(levels, coarsening, threshold)


def restrict_states(fine: Array, coarsening: int) -> Array:
    """Injection: row n of the result is row n*coarsening of the input."""
    fine = np.asarray(fine, dtype=np.float64)
    if coarsening < 1 or len(fine) % coarsening != 0:
        raise DimensionError(
            f"cannot restrict {len(fine)} rows by factor {coarsening}"
        )
    return fine[::coarsening].copy()


def compute_residual(system, states: Array, source: Array) -> Array:
    """source - operator(states), evaluated row-fused.

    Rows whose state was produced by the shared propagation step come out as
    exact zeros, which is what makes relaxation exactness checkable.
    """
    states = check_states(system, states)
    source = check_states(system, source, "source")
    out = np.empty_like(states)
    out[0] = source[0] - states[0]
    for j in range(1, len(states)):
        propagated = propagate_values(system, states[j - 1], source, j, j + 1)[0]
        out[j] = propagated - states[j]
    return out


def assemble_coarse_source(
    coarse_states: Array, coarse_residual: Array, coarse_level: MgLevel
) -> Array:
    """Right-hand side of the coarse full-approximation system.

    operator(restricted iterate) plus the injected residual; solving the
    coarse system against it and subtracting the restricted iterate yields
    the C-layer correction.
    """
    coarse_states = check_states(coarse_level, coarse_states)
    coarse_residual = check_states(coarse_level, coarse_residual, "residual")
    return propagation_operator(coarse_level, coarse_states) + coarse_residual


def f_relaxation(system, states: Array, source: Array, partition: BlockPartition) -> None:
    """Serial F-sweep: repropagate each block's F-layers from its C-layer.

    Afterwards every residual row at an F-layer index is exactly zero;
    C-layer rows are untouched.
    """
    parallel_f_relax(system, states, source, partition, executor=None)


def c_relaxation(system, states: Array, source: Array, partition: BlockPartition) -> None:
    """Serial C-sweep: row 0 from the source, every other C-layer from the
    last F-layer of the preceding block."""
    exchange_and_c_relax(system, states, source, partition)


def fcf_relaxation(
    system,
    states: Array,
    source: Array,
    partition: BlockPartition,
    *,
    executor: Executor | None = None,
    tracker: ExchangeTracker | None = None,
) -> None:
    """F-sweep, C-sweep, F-sweep, with a full barrier between sweeps."""
    parallel_f_relax(system, states, source, partition, executor=executor)
    exchange_and_c_relax(system, states, source, partition, executor=executor, tracker=tracker)
    parallel_f_relax(system, states, source, partition, executor=executor)


def mg_cycle(
    hierarchy: MgHierarchy,
    states: Array,
    source: Array,
    *,
    level: int = 0,
    partitions: list[BlockPartition] | None = None,
    executor: Executor | None = None,
    trackers: list[ExchangeTracker] | None = None,
) -> float:
    """One full-approximation cycle in place; returns the new residual norm.

    Relax (FCF), inject residual and iterate, solve the coarse system (one
    recursive cycle per level, exact forward substitution on the coarsest),
    and correct the C-layers by the coarse-minus-restricted difference.
    """
    lev = hierarchy.levels[level]
    checked = check_states(lev, states)
    if checked is not states:
        raise DimensionError("states must be a float64 array; the cycle updates it in place")
    source = check_states(lev, source, "source")
    if level == hierarchy.num_levels - 1:
        # single-level hierarchy: the "cycle" is the exact solve
        states[:] = sequential_forward(lev, source)
        return l2_norm(compute_residual(lev, states, source))

    c = hierarchy.coarsening_factor
    partition = (
        partitions[level] if partitions is not None else make_partition(lev.num_layers, c, 1)
    )
    tracker = trackers[level] if trackers is not None else None
    fcf_relaxation(lev, states, source, partition, executor=executor, tracker=tracker)

    residual = compute_residual(lev, states, source)
    coarse = hierarchy.levels[level + 1]
    coarse_states = restrict_states(states, c)
    coarse_residual = restrict_states(residual, c)
    coarse_source = assemble_coarse_source(coarse_states, coarse_residual, coarse)

    if level + 1 == hierarchy.num_levels - 1:
        solved = sequential_forward(coarse, coarse_source)
    else:
        solved = coarse_states.copy()
        mg_cycle(
            hierarchy,
            solved,
            coarse_source,
            level=level + 1,
            partitions=partitions,
            executor=executor,
            trackers=trackers,
        )
    states[::c] += solved - coarse_states
    return l2_norm(compute_residual(lev, states, source))


@dataclass
class CycleReport:
    """Residual L2 norms per cycle (entry 0 is the initial residual)."""

    residual_norms: list[float]
    converged: bool

    @property
    def cycles_used(self) -> int:
        return len(self.residual_norms) - 1

    def write_csv(self, target) -> None:
        """Write ``cycle,residual_l2`` rows; target is a path or a text file."""
        if hasattr(target, "write"):
            self._write(target)
        else:
            with open(os.fspath(target), "w", encoding="utf-8", newline="") as fh:
                self._write(fh)

    def _write(self, fh: io.TextIOBase) -> None:
        writer = csv.writer(fh)
        writer.writerow(["cycle", "residual_l2"])
        for cycle, norm in enumerate(self.residual_norms):
            writer.writerow([cycle, repr(norm)])


def initial_guess(level: MgLevel, source: Array) -> Array:
    """Every layer state starts as a copy of the opened input (source row 0)."""
    n, _ = system_shape(level)
    return np.tile(np.asarray(source[0], dtype=np.float64), (n, 1))


def solve(
    hierarchy: MgHierarchy,
    source: Array,
    tol: float = DEFAULT_TOL,
    max_cycles: int = DEFAULT_MAX_CYCLES,
    *,
    workers: int = 1,
    initial: Array | None = None,
) -> tuple[Array, CycleReport]:
    """Iterate cycles until the residual norm drops to tol.

    Hitting max_cycles first is not an error: the report comes back with
    converged=False and the states are the usable early-stopped iterate.
    """
    if not (isinstance(tol, (int, float)) and math.isfinite(tol) and tol > 0):
        raise ConfigurationError(f"tolerance must be a finite positive number, got {tol}")
    if max_cycles < 1:
        raise ConfigurationError(f"max_cycles must be >= 1, got {max_cycles}")
    if workers < 1:
        raise ConfigurationError(f"workers must be >= 1, got {workers}")
    fine = hierarchy.fine
    source = check_states(fine, source, "source")
    states = (
        check_states(fine, initial).copy() if initial is not None else initial_guess(fine, source)
    )
    c = hierarchy.coarsening_factor
    relaxed = hierarchy.levels[:-1]  # the coarsest level is solved exactly, never relaxed
    partitions = [make_partition(lev.num_layers, c, workers) for lev in relaxed]
    trackers = [ExchangeTracker() for _ in relaxed]

    norms = [l2_norm(compute_residual(fine, states, source))]
    converged = norms[0] <= tol
    executor = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        while not converged and len(norms) <= max_cycles:
            norm = mg_cycle(
                hierarchy,
                states,
                source,
                partitions=partitions,
                executor=executor,
                trackers=trackers,
            )
            norms.append(norm)
            converged = norm <= tol
    finally:
        if executor is not None:
            executor.shutdown(wait=True)
    return states, CycleReport(norms, converged)


def solve_forward(
    net: ResidualNetwork,
    source: Array,
    coarsening: int = 4,
    tol: float = DEFAULT_TOL,
    max_cycles: int = DEFAULT_MAX_CYCLES,
    *,
    workers: int = 1,
) -> tuple[Array, CycleReport]:
    """Convenience wrapper: build the default two-level hierarchy and solve."""
    return solve(build_hierarchy(net, coarsening), source, tol, max_cycles, workers=workers)
