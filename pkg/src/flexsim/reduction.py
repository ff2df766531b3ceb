"""Flexible reduction: index-comparing add-or-bypass adder tree (ART)."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .errors import PlanError


class TaggedPartial(NamedTuple):
    out_index: tuple      # output coordinate (m, n)
    value: int


def reduce_latency(leaves: int) -> int:
    """Pipeline stages of a tree over ``leaves`` inputs; add and bypass cost the same."""
    if leaves < 1:
        raise ValueError("need at least one leaf")
    return (leaves - 1).bit_length()


@dataclass(frozen=True)
class ArtTopology:
    leaves: int

    @property
    def depth(self) -> int:
        return reduce_latency(self.leaves)

    def nodes_per_level(self) -> list:
        out, n = [], self.leaves
        while n > 1:
            n = -(-n // 2)
            out.append(n)
        return out

    @property
    def adders(self) -> int:
        return sum(self.nodes_per_level())

    @property
    def augmented_links(self) -> int:
        # Links between neighbouring adders at one level that have different parents.
        return sum((n - 1) // 2 for n in self.nodes_per_level())


def check_contiguous(indices: Sequence) -> None:
    seen = set()
    prev = object()
    for idx in indices:
        if idx != prev:
            if idx in seen:
                raise PlanError(f"output index {idx} appears in two separate runs")
            seen.add(idx)
            prev = idx


def flexible_reduce(partials: Sequence[TaggedPartial], trace: list | None = None) -> list:
    """One pass through the ART.

    Each node compares the index of the last run arriving from its left child
    with the first run from its right child: equal indices are added, unequal
    ones bypass. Runs that can no longer meet a neighbour leave the tree over
    the forwarding links, so a single pass yields one output per index.
    """
    partials = [TaggedPartial(tuple(p[0]), int(p[1])) for p in partials]
    check_contiguous([p.out_index for p in partials])
    level = [[p] for p in partials]
    depth = 0
    while len(level) > 1:
        depth += 1
        nxt = []
        for node in range(0, len(level), 2):
            if node + 1 == len(level):
                nxt.append(level[node])
                continue
            left, right = level[node], level[node + 1]
            if left[-1].out_index == right[0].out_index:
                joined = TaggedPartial(left[-1].out_index, left[-1].value + right[0].value)
                merged = left[:-1] + [joined] + right[1:]
                action, idx = "add", joined.out_index
            else:
                merged = left + right
                action, idx = "bypass", left[-1].out_index
            if trace is not None:
                trace.append((depth, f"L{depth}N{node // 2}", action, idx))
            nxt.append(merged)
        level = nxt
    return list(level[0]) if level else []


def write_reduction_trace_csv(trace, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["cycle", "node", "action", "index"])
        for cycle, node, action, idx in trace:
            w.writerow([cycle, node, action, " ".join(str(i) for i in idx)])


def segment_reduce(keys: np.ndarray, values: np.ndarray):
    """Array form of one ART pass: sums of contiguous equal-key runs.

    Returns ``(run_keys, run_sums)`` in stream order; a key split across two
    runs is a packing violation.
    """
    keys = np.asarray(keys)
    values = np.asarray(values, dtype=np.int64)
    if keys.size == 0:
        return keys[:0], values[:0]
    starts = np.flatnonzero(np.concatenate(([True], keys[1:] != keys[:-1])))
    run_keys = keys[starts]
    if np.unique(run_keys).size != run_keys.size:
        raise PlanError("an output index appears in two separate runs")
    return run_keys, np.add.reduceat(values, starts)
