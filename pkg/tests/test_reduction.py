import csv
from collections import defaultdict

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from flexsim.errors import PlanError
from flexsim.reduction import (
    ArtTopology,
    TaggedPartial,
    flexible_reduce,
    reduce_latency,
    segment_reduce,
    write_reduction_trace_csv,
)


def test_matching_indices_add():
    assert flexible_reduce([((0, 0), 10), ((0, 0), -4)]) == [TaggedPartial((0, 0), 6)]


def test_mismatched_indices_bypass():
    out = flexible_reduce([((0, 0), 7), ((1, 3), 2)])
    assert out == [TaggedPartial((0, 0), 7), TaggedPartial((1, 3), 2)]


def test_random_sixteen_over_three_indices(rng):
    counts = rng.multinomial(13, [1 / 3] * 3) + 1
    idx = [(0, 0)] * counts[0] + [(0, 1)] * counts[1] + [(2, 5)] * counts[2]
    vals = rng.integers(-1000, 1000, 16)
    expect = defaultdict(int)
    for i, v in zip(idx, vals):
        expect[i] += int(v)
    out = flexible_reduce(list(zip(idx, vals)))
    assert {p.out_index: p.value for p in out} == dict(expect)


def test_non_contiguous_runs_rejected():
    with pytest.raises(PlanError):
        flexible_reduce([((0, 0), 1), ((0, 1), 1), ((0, 0), 1)])
    with pytest.raises(PlanError):
        segment_reduce(np.array([1, 2, 1]), np.array([1, 1, 1]))


def test_empty_input():
    assert flexible_reduce([]) == []


@pytest.mark.parametrize("leaves,cycles", [(1, 0), (2, 1), (16, 4), (17, 5), (64, 6)])
def test_reduce_latency(leaves, cycles):
    assert reduce_latency(leaves) == cycles
    assert ArtTopology(leaves).depth == cycles


def test_reduce_latency_rejects_zero():
    with pytest.raises(ValueError):
        reduce_latency(0)


def test_topology_counts():
    topo = ArtTopology(16)
    assert topo.nodes_per_level() == [8, 4, 2, 1]
    assert topo.adders == 15
    assert topo.augmented_links == 3 + 1 + 0 + 0


@st.composite
def contiguous_runs(draw):
    n_runs = draw(st.integers(1, 12))
    keys = draw(st.lists(st.tuples(st.integers(0, 20), st.integers(0, 20)),
                         min_size=n_runs, max_size=n_runs, unique=True))
    out = []
    for k in keys:
        for v in draw(st.lists(st.integers(-2**20, 2**20), min_size=1, max_size=9)):
            out.append((k, v))
    return out


@given(contiguous_runs())
def test_sum_preservation_single_pass(partials):
    expect = defaultdict(int)
    for k, v in partials:
        expect[k] += v
    out = flexible_reduce(partials)
    assert len({p.out_index for p in out}) == len(out)      # one pass suffices
    assert {p.out_index: p.value for p in out} == dict(expect)
    keys = np.array([k[0] * 100 + k[1] for k, _ in partials])
    run_keys, sums = segment_reduce(keys, np.array([v for _, v in partials]))
    assert [int(s) for s in sums] == [p.value for p in out]


def test_trace_csv(tmp_path):
    trace = []
    flexible_reduce([((0, 0), 1), ((0, 0), 2), ((0, 1), 3), ((0, 1), 4)], trace)
    assert [t[2] for t in trace] == ["add", "add", "bypass"]
    write_reduction_trace_csv(trace, tmp_path / "r.csv")
    rows = list(csv.reader(open(tmp_path / "r.csv")))
    assert rows[0] == ["cycle", "node", "action", "index"]
    assert len(rows) == 4
