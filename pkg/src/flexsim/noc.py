"""Dense sparse-GEMM mapping and the hierarchical distribution fabric.

Mapping. Products ``a[m,k] * b[k,n]`` with both operands nonzero are
enumerated per block of A rows that fits the array, then per output column
n, then in row-major order of the block's nonzeros. The stream is cut into
rounds of ``capacity`` products and laid out row by row over the logical MAC
grid (``array_rows*s`` x ``array_cols*s`` lanes, ``s`` = 1/2/4 for
16/8/4-bit). Every slot therefore holds a nonzero stationary A element,
every nonzero product runs exactly once, and partials of one output are
adjacent in the stream, which the flexible reduction tree needs.

Fabric. Multicast and broadcast deliveries travel down a two-level HMF
tree: the upper level fans out over grid columns, and a lower tree per column
fans out over its rows. Each switch has ``fanout`` children plus a feedback
path. Every column subtree root admits ``ingress_per_cycle`` new values per
cycle. Unicasts use a one-value-per-row-per-cycle 1D mesh. With feedback enabled a
value delivered in the previous round to an ancestor-or-self subtree is
re-injected from the switch instead of read from the buffer again.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np

from .errors import PlanError
from .tensor import DenseTile, PrecisionMode

# ----------------------------------------------------------------------------
# dataflow tags


class TagKind(enum.Enum):
    UNICAST = "U"
    MULTICAST = "M"
    BROADCAST = "B"


@dataclass(frozen=True)
class DataflowTag:
    kind: TagKind
    destinations: frozenset


def classify_destinations(destinations, grid_rows: int, grid_cols: int) -> TagKind:
    dests = set(destinations)
    if len(dests) == 1:
        return TagKind.UNICAST
    if not dests:
        raise ValueError("empty destination set")
    rows = {r for r, _ in dests}
    cols = {c for _, c in dests}
    if (len(rows) == 1 and len(dests) == grid_cols) or \
            (len(cols) == 1 and len(dests) == grid_rows):
        return TagKind.BROADCAST
    return TagKind.MULTICAST


# ----------------------------------------------------------------------------
# mapping plan


@dataclass(frozen=True)
class Round:
    index: int
    products: tuple                 # (m, k, n) per occupied slot, slot order
    stationary: dict                # (row, col) -> (m, k)
    streaming: dict                 # (k, n) -> DataflowTag
    stationary_tags: dict           # (m, k) -> DataflowTag


@dataclass(frozen=True, eq=False)
class MappingPlan:
    a: DenseTile
    b: DenseTile
    array_rows: int
    array_cols: int
    mode: PrecisionMode
    prod_m: np.ndarray
    prod_k: np.ndarray
    prod_n: np.ndarray

    @property
    def grid_rows(self) -> int:
        return self.array_rows * self.mode.scale

    @property
    def grid_cols(self) -> int:
        return self.array_cols * self.mode.scale

    @property
    def capacity(self) -> int:
        return self.grid_rows * self.grid_cols

    @property
    def n_products(self) -> int:
        return int(self.prod_m.size)

    @property
    def n_rounds(self) -> int:
        return -(-self.n_products // self.capacity)

    @property
    def positions(self) -> np.ndarray:
        """Slot index within its round for each product."""
        return np.arange(self.n_products, dtype=np.int64) % self.capacity

    @property
    def round_ids(self) -> np.ndarray:
        return np.arange(self.n_products, dtype=np.int64) // self.capacity

    def slot_rc(self, slot):
        return divmod(slot, self.grid_cols)

    def round(self, t: int) -> Round:
        if not 0 <= t < self.n_rounds:
            raise IndexError(t)
        lo, hi = t * self.capacity, min((t + 1) * self.capacity, self.n_products)
        prods = tuple(zip(self.prod_m[lo:hi].tolist(), self.prod_k[lo:hi].tolist(),
                          self.prod_n[lo:hi].tolist()))
        stationary, b_dest, a_dest = {}, {}, {}
        for slot, (m, k, n) in enumerate(prods):
            pos = self.slot_rc(slot)
            stationary[pos] = (m, k)
            b_dest.setdefault((k, n), set()).add(pos)
            a_dest.setdefault((m, k), set()).add(pos)

        def tags(d):
            return {key: DataflowTag(classify_destinations(v, self.grid_rows, self.grid_cols),
                                     frozenset(v)) for key, v in d.items()}
        return Round(t, prods, stationary, tags(b_dest), tags(a_dest))

    @property
    def rounds(self) -> list:
        return [self.round(t) for t in range(self.n_rounds)]


_CHUNK = 1 << 22


def row_blocks(a: DenseTile, capacity: int) -> list:
    """Greedy groups of consecutive A rows whose nonzeros fit one round.

    A row with more nonzeros than the array holds forms a block of its own.
    Returns ``(first_row, end_row)`` pairs; all-zero rows are skipped.
    """
    nnz = np.count_nonzero(a.array, axis=1)
    blocks, start, load = [], None, 0
    for r, z in enumerate(nnz.tolist()):
        if z == 0:
            continue
        if start is not None and load + z > capacity:
            blocks.append((start, r))
            start, load = None, 0
        if start is None:
            start = r
        load += z
    if start is not None:
        blocks.append((start, a.rows))
    return blocks


def plan_mapping(a: DenseTile, b: DenseTile, array_rows: int, array_cols: int,
                 mode=None) -> MappingPlan:
    """Pack every nonzero product densely into rounds.

    Order: blocks of A rows that fit the array, then output column n, then
    A's nonzeros in row-major order. Within a block the stationary layout
    repeats for every n, and each output's partials form one contiguous run.
    """
    if a.cols != b.rows:
        raise ValueError(f"inner dimensions differ: A is {a.rows}x{a.cols}, B is {b.rows}x{b.cols}")
    if a.mode is not b.mode:
        raise ValueError(f"operand modes differ: {a.mode} vs {b.mode}")
    mode = a.mode if mode is None else PrecisionMode.parse(mode)
    if mode is not a.mode:
        raise ValueError(f"tiles are {a.mode}, plan requested {mode}")
    if array_rows < 1 or array_cols < 1:
        raise ValueError("array dimensions must be positive")
    capacity = array_rows * array_cols * mode.lanes
    am, ak = np.nonzero(a.array)
    bnz = b.array != 0
    row_start = np.searchsorted(am, np.arange(a.rows + 1))
    ms, ks, ns = [], [], []
    for r0, r1 in row_blocks(a, capacity):
        i0, i1 = row_start[r0], row_start[r1]
        bm, bk = am[i0:i1], ak[i0:i1]
        sub = bnz[bk]                                 # (block nnz, N)
        col_work = sub.sum(axis=0)
        n0 = 0
        while n0 < b.cols:
            n1, work = n0, 0
            while n1 < b.cols and (n1 == n0 or work + col_work[n1] <= _CHUNK):
                work += col_work[n1]
                n1 += 1
            nn, ii = np.nonzero(sub[:, n0:n1].T)
            ms.append(bm[ii].astype(np.int32))
            ks.append(bk[ii].astype(np.int32))
            ns.append((nn + n0).astype(np.int32))
            n0 = n1
    cat = (lambda xs: np.concatenate(xs) if xs else np.zeros(0, dtype=np.int32))
    return MappingPlan(a, b, array_rows, array_cols, mode, cat(ms), cat(ks), cat(ns))


# ----------------------------------------------------------------------------
# vectorized delivery tables


@dataclass
class DeliveryTable:
    """One row per (round, operand value) delivery over a window of products."""
    operand: str                 # "A" (stationary) or "B" (streaming)
    lo: int                      # first product index of the window
    round: np.ndarray
    key: np.ndarray              # m*K+k for A, k*N+n for B
    count: np.ndarray            # |destinations|
    kind: np.ndarray             # 0=U, 1=M, 2=B
    starts: np.ndarray           # group start offsets into ``order``
    order: np.ndarray            # window product offsets grouped by delivery, slot-sorted

    def __len__(self):
        return int(self.round.size)


KIND_ORDER = (TagKind.UNICAST, TagKind.MULTICAST, TagKind.BROADCAST)


def delivery_table(plan: MappingPlan, operand: str, lo: int = 0,
                   hi: Optional[int] = None) -> DeliveryTable:
    hi = plan.n_products if hi is None else hi
    if operand == "A":
        key = plan.prod_m[lo:hi].astype(np.int64) * plan.a.cols + plan.prod_k[lo:hi]
        keyspace = plan.a.rows * plan.a.cols
    elif operand == "B":
        key = plan.prod_k[lo:hi].astype(np.int64) * plan.b.cols + plan.prod_n[lo:hi]
        keyspace = plan.b.rows * plan.b.cols
    else:
        raise ValueError(operand)
    if hi <= lo:
        z = np.zeros(0, dtype=np.int64)
        return DeliveryTable(operand, lo, z, z, z, z, z, z)
    idx = np.arange(lo, hi, dtype=np.int64)
    rid = idx // plan.capacity
    gk = (rid - rid[0]) * keyspace + key
    order = np.argsort(gk, kind="stable")
    gk = gk[order]
    starts = np.flatnonzero(np.concatenate(([True], gk[1:] != gk[:-1])))
    del gk
    count = np.diff(np.append(starts, order.size))
    r, c = np.divmod(idx[order] % plan.capacity, plan.grid_cols)
    same_row = np.minimum.reduceat(r, starts) == np.maximum.reduceat(r, starts)
    same_col = np.minimum.reduceat(c, starts) == np.maximum.reduceat(c, starts)
    bcast = (same_row & (count == plan.grid_cols)) | (same_col & (count == plan.grid_rows))
    kind = np.where(count == 1, 0, np.where(bcast, 2, 1))
    return DeliveryTable(operand, lo, rid[order][starts], key[order][starts], count, kind,
                         starts, order)


def _windows(plan: MappingPlan, max_products: int = 1 << 21):
    """Product ranges covering whole rounds, about ``max_products`` each."""
    per = max(1, max_products // plan.capacity) * plan.capacity
    return [(lo, min(lo + per, plan.n_products)) for lo in range(0, plan.n_products, per)]


@dataclass(frozen=True)
class DataflowHistogram:
    stationary: dict
    streaming: dict

    @property
    def total(self) -> dict:
        return {k: self.stationary[k] + self.streaming[k] for k in KIND_ORDER}

    @property
    def deliveries(self) -> int:
        return sum(self.total.values())


def classify_dataflow(plan: MappingPlan) -> DataflowHistogram:
    """Array-level tag histogram of every delivery in the plan."""
    hist = {"A": np.zeros(3, dtype=np.int64), "B": np.zeros(3, dtype=np.int64)}
    for lo, hi in _windows(plan):
        for op in hist:
            hist[op] += np.bincount(delivery_table(plan, op, lo, hi).kind, minlength=3)
    conv = (lambda h: {k: int(h[i]) for i, k in enumerate(KIND_ORDER)})
    return DataflowHistogram(stationary=conv(hist["A"]), streaming=conv(hist["B"]))


# ----------------------------------------------------------------------------
# HMF-NoC


@dataclass
class HmfNocModel:
    grid_rows: int
    grid_cols: int
    fanout: int = 2
    feedback_enabled: bool = True
    ingress_per_cycle: int = 1

    def __post_init__(self):
        if self.fanout < 2:
            raise ValueError("switch fanout must be >= 2")
        if self.ingress_per_cycle < 1:
            raise ValueError("ingress per cycle must be >= 1")

    @staticmethod
    def _levels(n: int, f: int) -> int:
        lv, span = 0, 1
        while span < n:
            span *= f
            lv += 1
        return lv

    @property
    def col_levels(self) -> int:
        return self._levels(self.grid_cols, self.fanout)

    @property
    def row_levels(self) -> int:
        return self._levels(self.grid_rows, self.fanout)

    @property
    def levels(self) -> int:
        return self.col_levels + self.row_levels

    @property
    def rows_padded(self) -> int:
        return self.fanout ** self.row_levels

    def leaf_id(self, row, col):
        """Leaves are numbered column-major so each column is one subtree."""
        return col * self.rows_padded + row

    @property
    def switch_count(self) -> int:
        total, n = 0, self.fanout ** self.col_levels * self.rows_padded
        for _ in range(self.levels):
            n = -(-n // self.fanout)
            total += n
        return total

    @classmethod
    def for_plan(cls, plan: MappingPlan, **kw) -> "HmfNocModel":
        return cls(plan.grid_rows, plan.grid_cols, **kw)


@dataclass(frozen=True)
class ScheduleEntry:
    cycle: int
    level: str
    node_id: str
    value_id: str
    tag: TagKind
    destinations: tuple


@dataclass
class RouteResult:
    counters: dict
    round_cycles: np.ndarray         # issue cycles per round
    fill_cycles: int                 # one traversal of the tree depth
    array_tags: DataflowHistogram
    unit_tags: dict
    per_operand: dict = field(default_factory=dict)
    schedule: Optional[list] = None

    @property
    def distribution_cycles(self) -> int:
        issue = int(self.round_cycles.sum())
        return issue + self.fill_cycles if issue else 0

    @property
    def buffer_reads(self) -> int:
        return self.counters["buffer_reads"]

    def tag_histogram(self, level: Optional[str] = None) -> dict:
        if level == "array":
            return self.array_tags.total
        if level == "unit":
            return dict(self.unit_tags)
        arr = self.array_tags.total
        return {k: arr[k] + self.unit_tags[k] for k in KIND_ORDER}


def unit_subword_tag(mode: PrecisionMode) -> TagKind:
    """How a subword fans out over the 4x4 sub-multipliers inside a unit."""
    return {PrecisionMode.INT16: TagKind.BROADCAST, PrecisionMode.INT8: TagKind.MULTICAST,
            PrecisionMode.INT4: TagKind.UNICAST}[mode]


_STAT_KEYS = ("deliveries", "node_traversals", "buffer_reads", "feedback_reuses",
              "mesh_transfers", "hmf_deliveries")


def _route_operand(plan: MappingPlan, noc: HmfNocModel, table: DeliveryTable, feedback: bool,
                   round0: int, n_rounds: int, prev=None):
    """Counters and per-round issue cycles for one operand over one window.

    ``prev`` carries (round, key, lca_level, lca_node) of the preceding
    round's deliveries so feedback is detected across window boundaries.
    """
    f, L = noc.fanout, noc.levels
    stats = dict.fromkeys(_STAT_KEYS, 0)
    stats["deliveries"] = len(table)
    port_cycles = np.zeros(n_rounds, dtype=np.int64)
    mesh_cycles = np.zeros(n_rounds, dtype=np.int64)
    if len(table) == 0:
        return stats, port_cycles, None, prev
    group = np.repeat(np.arange(len(table)), table.count)
    slot = (table.order + table.lo) % plan.capacity
    leaf = noc.leaf_id(*np.divmod(slot, plan.grid_cols))
    # leaf order inside each delivery (column-major, unlike slot order)
    perm = np.lexsort((leaf, group))
    slot, leaf = slot[perm], leaf[perm]
    r, c = np.divmod(slot, plan.grid_cols)
    first_leaf = leaf[table.starts]
    last_leaf = np.maximum.reduceat(leaf, table.starts)

    # lowest common ancestor of each delivery
    lca_level = np.zeros(len(table), dtype=np.int64)
    for lv in range(1, L + 1):
        lca_level += (first_leaf // f ** (lv - 1)) != (last_leaf // f ** (lv - 1))
    lca_node = first_leaf // f ** lca_level

    # feedback: same value delivered last round under an ancestor-or-self switch
    reuse = np.zeros(len(table), dtype=bool)
    if feedback:
        n_prev = 0 if prev is None else prev[0].size
        rounds = table.round if prev is None else np.concatenate((prev[0], table.round))
        keys = table.key if prev is None else np.concatenate((prev[1], table.key))
        lvl = lca_level if prev is None else np.concatenate((prev[2], lca_level))
        node = lca_node if prev is None else np.concatenate((prev[3], lca_node))
        by_key = np.lexsort((rounds, keys))
        k, rd = keys[by_key], rounds[by_key]
        cand = (k[1:] == k[:-1]) & (rd[1:] == rd[:-1] + 1)
        before, cur = by_key[:-1][cand], by_key[1:][cand]
        up = lvl[before] - lvl[cur]
        ok = (up >= 0) & ((node[cur] // f ** np.maximum(up, 0)) == node[before])
        reuse[cur[ok] - n_prev] = True

    hmf = table.kind != 0
    stats["hmf_deliveries"] = int(hmf.sum())
    stats["mesh_transfers"] = int((~hmf & ~reuse).sum())
    stats["feedback_reuses"] = int(reuse.sum())
    stats["buffer_reads"] = int((~reuse).sum())

    # switches traversed: distinct ancestors per level, from the entry switch down
    is_hmf_leaf = hmf[group]
    if is_hmf_leaf.any():
        g_leaf = leaf[is_hmf_leaf]
        g_grp = group[is_hmf_leaf]
        top = np.where(reuse, lca_level, L)[g_grp]
        trav = 0
        for lv in range(1, L + 1):
            nd = g_leaf // f ** lv
            new = np.concatenate(([True], (nd[1:] != nd[:-1]) | (g_grp[1:] != g_grp[:-1])))
            trav += int((new & (lv <= top)).sum())
        stats["node_traversals"] = trav

    # issue cycles: each column subtree root admits ``ingress`` values per cycle
    fresh_hmf = hmf & ~reuse
    if fresh_hmf.any() and L > 0:
        sel = fresh_hmf[group]
        port = leaf[sel] // noc.rows_padded
        g = group[sel]
        new = np.concatenate(([True], (port[1:] != port[:-1]) | (g[1:] != g[:-1])))
        pairs_round = table.round[g[new]] - round0
        pairs_port = port[new]
        n_ports = int(port.max()) + 1
        load = np.bincount(pairs_round * n_ports + pairs_port, minlength=n_rounds * n_ports)
        load = load.reshape(n_rounds, n_ports).max(axis=1)
        port_cycles = -(-load // noc.ingress_per_cycle)
    uni = (~hmf) & (~reuse)
    if uni.any():
        rows = r[table.starts][uni]
        rounds_u = table.round[uni] - round0
        load = np.bincount(rounds_u * plan.grid_rows + rows, minlength=n_rounds * plan.grid_rows)
        mesh_cycles = load.reshape(n_rounds, plan.grid_rows).max(axis=1)
    cycles = np.maximum(port_cycles, mesh_cycles)
    last = table.round == table.round.max()
    carry = (table.round[last], table.key[last], lca_level[last], lca_node[last])
    detail = dict(lca_level=lca_level, lca_node=lca_node, reuse=reuse, slot=slot)
    return stats, cycles, detail, carry


def route(plan: MappingPlan, noc: Optional[HmfNocModel] = None, feedback: Optional[bool] = None,
          with_schedule: bool = False) -> RouteResult:
    """Schedule every delivery of ``plan`` and count fabric events."""
    noc = noc or HmfNocModel.for_plan(plan)
    if noc.grid_rows < plan.grid_rows or noc.grid_cols < plan.grid_cols:
        raise PlanError(f"NoC covers {noc.grid_rows}x{noc.grid_cols} positions, "
                        f"plan needs {plan.grid_rows}x{plan.grid_cols}")
    feedback = noc.feedback_enabled if feedback is None else feedback
    totals = dict.fromkeys(_STAT_KEYS, 0)
    per_op = {"A": dict.fromkeys(_STAT_KEYS, 0), "B": dict.fromkeys(_STAT_KEYS, 0)}
    cycles = np.zeros(plan.n_rounds, dtype=np.int64)
    hist = {"A": np.zeros(3, dtype=np.int64), "B": np.zeros(3, dtype=np.int64)}
    carry = {"A": None, "B": None}
    windows = [(0, plan.n_products)] if with_schedule else _windows(plan)
    tables, details = {}, {}
    for lo, hi in windows:
        r0 = lo // plan.capacity
        nr = -(-(hi - lo) // plan.capacity)
        for op in ("A", "B"):
            table = delivery_table(plan, op, lo, hi)
            stats, cyc, detail, carry[op] = _route_operand(plan, noc, table, feedback,
                                                           r0, nr, carry[op])
            for k, v in stats.items():
                totals[k] += v
                per_op[op][k] += v
            cycles[r0:r0 + nr] = np.maximum(cycles[r0:r0 + nr], cyc)
            hist[op] += np.bincount(table.kind, minlength=3)
            tables[op], details[op] = table, detail
    conv = (lambda h: {k: int(h[i]) for i, k in enumerate(KIND_ORDER)})
    array_tags = DataflowHistogram(stationary=conv(hist["A"]), streaming=conv(hist["B"]))
    sub = plan.n_products * plan.mode.limbs * 2          # both operands, every limb
    unit_tags = {k: 0 for k in KIND_ORDER}
    unit_tags[unit_subword_tag(plan.mode)] = sub
    totals["unit_subword_deliveries"] = sub
    result = RouteResult(totals, cycles, noc.levels, array_tags, unit_tags, per_op)
    if with_schedule:
        result.schedule = _build_schedule(plan, tables, details, cycles)
    return result


def _build_schedule(plan, tables, details, cycles) -> list:
    base = np.concatenate(([0], np.cumsum(cycles)[:-1])) if cycles.size else cycles
    entries = []
    letters = {0: TagKind.UNICAST, 1: TagKind.MULTICAST, 2: TagKind.BROADCAST}
    for op, table in tables.items():
        d = details[op]
        if d is None:
            continue
        slot_issue = {}
        for g in range(len(table)):
            rd = int(table.round[g])
            key = int(table.key[g])
            if op == "A":
                vid = f"A[{key // plan.a.cols},{key % plan.a.cols}]"
            else:
                vid = f"B[{key // plan.b.cols},{key % plan.b.cols}]"
            lo = table.starts[g]
            slots = d["slot"][lo: lo + table.count[g]]
            dests = tuple(divmod(int(s), plan.grid_cols) for s in slots)
            if table.kind[g] == 0 and not d["reuse"][g]:
                level, node = "mesh", f"row{dests[0][0]}"
            else:
                level = f"L{int(d['lca_level'][g])}"
                node = f"{level}N{int(d['lca_node'][g])}" + ("/fb" if d["reuse"][g] else "")
            q = slot_issue.get((rd, node), 0)
            slot_issue[(rd, node)] = q + 1
            entries.append(ScheduleEntry(int(base[rd]) + q, level, node, vid,
                                         letters[int(table.kind[g])], dests))
    entries.extend(_unit_entries(plan, base))
    entries.sort(key=lambda e: (e.cycle, e.level, e.value_id))
    return entries


def subword_cells(mode: PrecisionMode, lane: int, operand: str, limb: int) -> frozenset:
    """Sub-multiplier cells (1-based row, col) that receive one operand limb.

    Lane ``(lr, lc)`` owns the brick block whose rows follow A's limbs and
    whose columns, counted from the right, follow B's limbs.
    """
    s = mode.scale
    lr, lc = divmod(lane, s)
    n = mode.limbs
    rows = range(lr * n + 1, lr * n + n + 1)
    cols = [4 - lc * n - j for j in range(n)]
    if operand == "A":
        return frozenset((lr * n + 1 + limb, c) for c in cols)
    return frozenset((r, 4 - lc * n - limb) for r in rows)


def _unit_entries(plan: MappingPlan, base) -> list:
    s = plan.mode.scale
    tag = unit_subword_tag(plan.mode)
    out = []
    for i in range(plan.n_products):
        rd, slot = divmod(i, plan.capacity)
        r, c = divmod(slot, plan.grid_cols)
        unit = f"U{r // s}_{c // s}"
        lane = (r % s) * s + c % s
        m, k, n = int(plan.prod_m[i]), int(plan.prod_k[i]), int(plan.prod_n[i])
        for op, vid in (("A", f"A[{m},{k}]"), ("B", f"B[{k},{n}]")):
            for limb in range(plan.mode.limbs):
                cells = tuple(sorted(subword_cells(plan.mode, lane, op, limb)))
                out.append(ScheduleEntry(int(base[rd]), "unit", f"{unit}/clb",
                                         f"{vid}.s{limb}", tag, cells))
    return out


def write_schedule_csv(schedule, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["cycle", "level", "node_id", "value_id", "tag", "destinations"])
        for e in schedule:
            w.writerow([e.cycle, e.level, e.node_id, e.value_id, e.tag.value,
                        " ".join(f"{r}:{c}" for r, c in e.destinations)])


# ----------------------------------------------------------------------------
# column-level bypass links


@dataclass(frozen=True)
class ClbLink:
    mode: PrecisionMode
    pipelined: bool = True          # CLB present
    wired_links: int = 16

    @property
    def bw_utilization(self) -> float:
        if self.pipelined:
            return 100.0
        return 100.0 * self.mode.lanes * self.mode.bits / 64


@dataclass(frozen=True)
class Placement:
    element: int                    # element index inside the 16-bit transfer
    subword: int                    # limb index, 0 = least significant
    value: int                      # raw 4-bit pattern
    cells: frozenset                # (row, col), 1-based, col 4 = rightmost
    tag: TagKind


@dataclass(frozen=True)
class ClbDelivery:
    placements: tuple
    fetches: int
    bw_utilization: float


def clb_deliver(word: int, mode, transfer: int = 0, clb_enabled: bool = True) -> ClbDelivery:
    """Place one 16-bit transfer's subwords on the 4x4 sub-multiplier grid.

    16-bit: the element's subword j goes to every row of column 4-j.
    8-bit: the transfer holds two elements; subword j of element e goes to
    rows {2e+1, 2e+2} of column 4-2*transfer-j.
    4-bit: four single-limb elements, element e to row e+1 of column 4-transfer.
    """
    mode = PrecisionMode.parse(mode)
    if not 0 <= word < 1 << 16:
        raise ValueError("CLB transfers are 16-bit words")
    nib = [(word >> (4 * i)) & 0xF for i in range(4)]
    out = []
    if mode is PrecisionMode.INT16:
        if transfer != 0:
            raise ValueError("a 16-bit element is a single transfer")
        for j in range(4):
            out.append(Placement(0, j, nib[j], frozenset((r, 4 - j) for r in range(1, 5)),
                                 TagKind.BROADCAST))
    elif mode is PrecisionMode.INT8:
        if transfer not in (0, 1):
            raise ValueError("8-bit mode uses transfers 0 and 1")
        for e in range(2):
            for j in range(2):
                col = 4 - 2 * transfer - j
                out.append(Placement(e, j, nib[2 * e + j],
                                     frozenset({(2 * e + 1, col), (2 * e + 2, col)}),
                                     TagKind.MULTICAST))
    else:
        if transfer not in range(4):
            raise ValueError("4-bit mode uses transfers 0..3")
        for e in range(4):
            out.append(Placement(e, 0, nib[e], frozenset({(e + 1, 4 - transfer)}),
                                 TagKind.UNICAST))
    link = ClbLink(mode, clb_enabled)
    return ClbDelivery(tuple(out), fetches=1, bw_utilization=link.bw_utilization)


def port_fetches(elements_per_unit: np.ndarray, mode: PrecisionMode, clb_enabled: bool) -> int:
    """64-bit port fetches needed to feed each unit its operand elements.

    Without the CLB a fetch carries one element per lane (16/32/64 useful
    bits); with it every fetch is full.
    """
    elements_per_unit = np.asarray(elements_per_unit, dtype=np.int64)
    per_fetch = (64 // mode.bits) if clb_enabled else mode.lanes
    return int((-(-elements_per_unit // per_fetch)).sum())
