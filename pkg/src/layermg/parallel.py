"""Block partitioning and concurrent relaxation sweeps.

Layers are grouped into contiguous blocks of c layers; the first layer of a
block is its C-layer, the rest are F-layers. F-sweeps touch disjoint index
ranges per block, so blocks run concurrently, one owner per block. C-sweeps
carry each block's last F-layer state across the block boundary; when the
abutting blocks live in different worker groups that value travels as an
explicit BoundaryMessage, exactly one per edge per sweep.

Results are bitwise identical for every worker count: each state entry is
produced by the same arithmetic from values of the previous sweep, all
writes are exclusively owned, and sweeps are separated by full barriers.
"""

from __future__ import annotations

import struct
from concurrent.futures import Executor
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, ProtocolError
from .kernels import Array
from .network import propagate_values, system_shape


@dataclass
class BlockPartition:
    """Contiguous [start, stop) layer blocks and their worker assignment."""

    block_ranges: list[tuple[int, int]]
    assignment: list[int]
    num_workers: int

    @property
    def num_blocks(self) -> int:
        return len(self.block_ranges)

    @property
    def block_size(self) -> int:
        start, stop = self.block_ranges[0]
        return stop - start

    def worker_ranges(self) -> list[list[tuple[int, int]]]:
        """Block ranges grouped by owning worker (idle workers get [])."""
        groups: list[list[tuple[int, int]]] = [[] for _ in range(self.num_workers)]
        for rng, worker in zip(self.block_ranges, self.assignment):
            groups[worker].append(rng)
        return groups

    def cross_edges(self) -> list[tuple[int, int]]:
        """(sender_block, receiver_block) pairs whose owners differ."""
        return [
            (k - 1, k)
            for k in range(1, self.num_blocks)
            if self.assignment[k - 1] != self.assignment[k]
        ]


def make_partition(num_layers: int, block_size: int, num_workers: int) -> BlockPartition:
    """Partition num_layers layers into blocks of block_size layers each.

    Blocks are handed to workers in contiguous runs; trailing workers may
    stay idle when there are fewer blocks than workers.
    """
    if block_size < 1:
        raise ConfigurationError(f"block size must be >= 1, got {block_size}")
    if num_workers < 1:
        raise ConfigurationError(f"need at least one worker, got {num_workers}")
    if num_layers < 1 or num_layers % block_size != 0:
        raise ConfigurationError(
            f"{num_layers} layers cannot be split into blocks of {block_size}"
        )
    num_blocks = num_layers // block_size
    ranges = [(k * block_size, (k + 1) * block_size) for k in range(num_blocks)]
    run = -(-num_blocks // num_workers)  # ceil division
    assignment = [k // run for k in range(num_blocks)]
    return BlockPartition(ranges, assignment, num_workers)


@dataclass
class BoundaryMessage:
    """One block-boundary state in flight during a C-sweep."""

    sender_block: int
    payload: Array
    sweep_tag: int


_WIRE_HEADER = struct.Struct("<QII")


def encode_message(msg: BoundaryMessage) -> bytes:
    """[u64 sweep tag][u32 sender block id][u32 vector length][f64 LE payload]."""
    payload = np.asarray(msg.payload, dtype="<f8")
    return _WIRE_HEADER.pack(msg.sweep_tag, msg.sender_block, payload.size) + payload.tobytes()


def decode_message(data: bytes) -> BoundaryMessage:
    if len(data) < _WIRE_HEADER.size:
        raise ProtocolError(f"message shorter than {_WIRE_HEADER.size}-byte header")
    tag, sender, length = _WIRE_HEADER.unpack_from(data)
    expected = _WIRE_HEADER.size + 8 * length
    if len(data) != expected:
        raise ProtocolError(f"message declares {length} values but carries {len(data)} bytes")
    payload = np.frombuffer(data, dtype="<f8", offset=_WIRE_HEADER.size).astype(np.float64)
    return BoundaryMessage(sender, payload, tag)


def wire_roundtrip_transport(messages: list[BoundaryMessage]) -> list[BoundaryMessage]:
    """Transport that pushes every message through the byte encoding."""
    return [decode_message(encode_message(m)) for m in messages]


class ExchangeTracker:
    """Issues sweep tags and enforces strictly increasing tags per edge."""

    def __init__(self):
        self._next_tag = 0
        self._last_seen: dict[tuple[int, int], int] = {}

    def take_tag(self) -> int:
        tag = self._next_tag
        self._next_tag += 1
        return tag

    def check(self, edge: tuple[int, int], tag: int) -> None:
        last = self._last_seen.get(edge)
        if last is not None and tag <= last:
            raise ProtocolError(f"edge {edge} saw tag {tag} after tag {last}")
        self._last_seen[edge] = tag


def _collect_spans(system, states, source, ranges):
    return [
        (start + 1, propagate_values(system, states[start], source, start + 1, stop))
        for start, stop in ranges
        if stop - start > 1
    ]


def parallel_f_relax(
    system, states: Array, source: Array, partition: BlockPartition, executor: Executor | None = None
) -> None:
    """F-sweep: repropagate every block's F-layers from its C-layer.

    With an executor, one task per worker computes its blocks into private
    buffers; nothing is committed until every task has finished, so a failing
    worker leaves the state array untouched. The result is bitwise identical
    to the serial sweep for any worker count.
    """
    if executor is None or partition.num_workers == 1:
        for start, stop in partition.block_ranges:
            if stop - start > 1:
                states[start + 1 : stop] = propagate_values(
                    system, states[start], source, start + 1, stop
                )
        return
    futures = [
        executor.submit(_collect_spans, system, states, source, ranges)
        for ranges in partition.worker_ranges()
        if ranges
    ]
    results = [fut.result() for fut in futures]
    for spans in results:
        for start, values in spans:
            states[start : start + len(values)] = values


def exchange_and_c_relax(
    system,
    states: Array,
    source: Array,
    partition: BlockPartition,
    *,
    executor: Executor | None = None,
    tracker: ExchangeTracker | None = None,
    transport=None,
) -> list[BoundaryMessage]:
    """C-sweep with explicit boundary messages across worker groups.

    Every cross-partition edge carries exactly one BoundaryMessage holding the
    sender block's last F-layer; missing, duplicated or malformed deliveries
    raise ProtocolError. Semantically identical to the plain C-sweep; the
    delivered messages are returned so callers can audit traffic.
    """
    n, q = system_shape(system)
    edges = partition.cross_edges()
    if edges and partition.block_size < 2:
        raise ConfigurationError("boundary exchange requires blocks of at least 2 layers")
    tag = tracker.take_tag() if tracker is not None else 0

    outbox = [
        BoundaryMessage(sender, states[partition.block_ranges[sender][1] - 1].copy(), tag)
        for sender, _ in edges
    ]
    inbox = list(transport(outbox)) if transport is not None else outbox

    by_sender: dict[int, BoundaryMessage] = {}
    for msg in inbox:
        if msg.sender_block in by_sender:
            raise ProtocolError(f"duplicate message from block {msg.sender_block}")
        by_sender[msg.sender_block] = msg
    expected_senders = {sender for sender, _ in edges}
    if set(by_sender) != expected_senders:
        missing = sorted(expected_senders - set(by_sender))
        stray = sorted(set(by_sender) - expected_senders)
        raise ProtocolError(f"bad exchange: missing senders {missing}, stray senders {stray}")
    for sender, receiver in edges:
        msg = by_sender[sender]
        if msg.payload.shape != (q,):
            raise ProtocolError(f"edge {(sender, receiver)} payload has shape {msg.payload.shape}")
        if tracker is not None:
            tracker.check((sender, receiver), msg.sweep_tag)

    cross_senders = {sender: by_sender[sender] for sender, _ in edges}

    def _c_updates(block_ids):
        updates = []
        for k in block_ids:
            j = partition.block_ranges[k][0]
            msg = cross_senders.get(k - 1)
            u_prev = msg.payload if msg is not None else states[j - 1]
            updates.append((j, propagate_values(system, u_prev, source, j, j + 1)[0]))
        return updates

    states[0] = source[0]
    interior = list(range(1, partition.num_blocks))
    if executor is None or partition.num_workers == 1:
        batches = [_c_updates(interior)]
    else:
        owners: list[list[int]] = [[] for _ in range(partition.num_workers)]
        for k in interior:
            owners[partition.assignment[k]].append(k)
        futures = [executor.submit(_c_updates, ids) for ids in owners if ids]
        batches = [fut.result() for fut in futures]
    for updates in batches:
        for j, value in updates:
            states[j] = value
    return inbox
