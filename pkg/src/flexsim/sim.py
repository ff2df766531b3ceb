"""Cycle and event model tying the planner, fabric, MAC array and reduction tree.

Per SRAM tile the pipeline is: measure sparsity -> pick a format -> decode ->
plan -> distribute -> multiply -> reduce -> encode the output. DRAM transfers
are double-buffered against compute while format conversion is serialized:

    tile_cycles = conversion + max(compute + distribution + reduction, dram)
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError, SimulationFault
from .formats import (SparsityFormat, decode, encode, footprint_bits, from_bytes,
                      select_format, to_bytes)
from .mac import ACC_MAX, ACC_MIN, check_accumulator, fused_multiply, fused_products
from .noc import HmfNocModel, MappingPlan, plan_mapping, route
from .reduction import TaggedPartial, flexible_reduce, reduce_latency, segment_reduce
from .tensor import DenseTile, PrecisionMode, measure_tile, prune_rows, synth_sparse

log = logging.getLogger(__name__)

ENERGY_CLASSES = ("mac_op", "sub_mult", "switch_traversal", "buffer_read", "feedback_reuse",
                  "mesh_hop", "sram_bit", "dram_bit", "codec_bit")

# Rough per-event costs in pJ. Placeholders for relative comparisons only;
# the DRAM figure is in the range usually quoted for LPDDR3.
DEFAULT_ENERGY_WEIGHTS = {
    "mac_op": 0.0, "sub_mult": 0.05, "switch_traversal": 0.02, "buffer_read": 1.0,
    "feedback_reuse": 0.1, "mesh_hop": 0.02, "sram_bit": 0.1, "dram_bit": 4.0,
    "codec_bit": 0.01,
}

CLOCK_HZ = 800e6
_CHUNK = 1 << 20


@dataclass(frozen=True)
class ArchConfig:
    array_rows: int = 64
    array_cols: int = 64
    mode: PrecisionMode = PrecisionMode.INT16
    noc_ingress_per_cycle: int = 1
    noc_fanout: int = 2
    clb_enabled: bool = True
    feedback_enabled: bool = True
    compression: bool = True
    sram_bytes: int = 256 * 1024
    dram_bytes_per_cycle: int = 16
    codec_bits_per_cycle: int = 512
    energy_weights: dict = field(default_factory=lambda: dict(DEFAULT_ENERGY_WEIGHTS))

    def __post_init__(self):
        object.__setattr__(self, "mode", PrecisionMode.parse(self.mode))
        for name in ("array_rows", "array_cols", "noc_ingress_per_cycle", "sram_bytes",
                     "dram_bytes_per_cycle", "codec_bits_per_cycle"):
            if getattr(self, name) < 1:
                raise ConfigError(name, f"{name} must be positive")
        if self.noc_fanout < 2:
            raise ConfigError("noc_fanout", "switch fanout must be >= 2")

    @property
    def units(self) -> int:
        return self.array_rows * self.array_cols

    @property
    def multipliers(self) -> int:
        """4-bit sub-multipliers in the array."""
        return self.units * 16

    @property
    def lane_capacity(self) -> int:
        return self.units * self.mode.lanes

    def with_mode(self, mode) -> "ArchConfig":
        return replace(self, mode=PrecisionMode.parse(mode))


@dataclass
class TileReport:
    cols: tuple                      # [n0, n1) slice of B
    a_format: SparsityFormat
    b_format: SparsityFormat
    out_format: SparsityFormat
    rounds: int
    products: int
    compute_cycles: int
    distribution_cycles: int
    reduction_cycles: int
    format_conversion_cycles: int
    dram_cycles: int

    @property
    def total_cycles(self) -> int:
        busy = self.compute_cycles + self.distribution_cycles + self.reduction_cycles
        return self.format_conversion_cycles + max(busy, self.dram_cycles)


@dataclass
class SimReport:
    compute_cycles: int = 0
    distribution_cycles: int = 0
    reduction_cycles: int = 0
    format_conversion_cycles: int = 0
    dram_cycles: int = 0
    total_cycles: int = 0
    mac_utilization: float = 0.0
    useful_products: int = 0
    rounds: int = 0
    traffic_bits: dict = field(default_factory=dict)
    ledger: dict = field(default_factory=lambda: dict.fromkeys(ENERGY_CLASSES, 0))
    result: Optional[np.ndarray] = None
    tiles: list = field(default_factory=list)
    label: str = ""
    mode: str = ""

    @property
    def wall_time_s(self) -> float:
        return self.total_cycles / CLOCK_HZ

    def row(self) -> dict:
        """Flat scalar fields for tabular reports."""
        out = {k: getattr(self, k) for k in (
            "compute_cycles", "distribution_cycles", "reduction_cycles",
            "format_conversion_cycles", "dram_cycles", "total_cycles", "rounds",
            "useful_products")}
        out["mac_utilization"] = round(self.mac_utilization, 6)
        for k, v in sorted(self.traffic_bits.items()):
            out[f"traffic_{k}_bits"] = v
        for k in ENERGY_CLASSES:
            out[f"events_{k}"] = self.ledger.get(k, 0)
        return out


# ----------------------------------------------------------------------------
# functional execution


def _check_acc_array(values: np.ndarray, what: str) -> None:
    if values.size and (values.min() < ACC_MIN or values.max() > ACC_MAX):
        raise SimulationFault(f"{what} exceeds the 48-bit accumulator range")


def execute_plan(plan: MappingPlan) -> np.ndarray:
    """Run every round: fused lane products, one ART pass, output accumulation."""
    M, N = plan.a.rows, plan.b.cols
    out = np.zeros((M, N), dtype=np.int64)
    P = plan.n_products
    if P == 0:
        return out
    a, b = plan.a.array, plan.b.array
    prods = np.empty(P, dtype=np.int64)
    for lo in range(0, P, _CHUNK):
        hi = min(lo + _CHUNK, P)
        pm, pk, pn = plan.prod_m[lo:hi], plan.prod_k[lo:hi], plan.prod_n[lo:hi]
        prods[lo:hi] = fused_products(a[pm, pk], b[pk, pn], plan.mode)
    # Output key n*M+m never decreases along the stream; rounds cut runs.
    key = plan.prod_n.astype(np.int64) * M + plan.prod_m
    cut = np.zeros(P, dtype=bool)
    cut[:: plan.capacity] = True
    cut[1:] |= key[1:] != key[:-1]
    starts = np.flatnonzero(cut)
    partial_keys = key[starts]
    partials = np.add.reduceat(prods, starts)
    _check_acc_array(partials, "a reduction-tree output")
    run_keys, sums = segment_reduce(partial_keys, partials)
    # running sums in the output accumulator, round by round
    first = np.flatnonzero(np.concatenate(([True], partial_keys[1:] != partial_keys[:-1])))
    csum = np.cumsum(partials)
    offset = np.repeat(csum[first] - partials[first], np.diff(np.append(first, partials.size)))
    _check_acc_array(csum - offset, "an output accumulator")
    n_idx, m_idx = np.divmod(run_keys, M)
    out[m_idx, n_idx] = sums
    return out


def execute_plan_stepwise(plan: MappingPlan, reduction_trace: Optional[list] = None) -> np.ndarray:
    """Slow reference: per-unit fused multiplies and a scalar ART pass per round."""
    M, N = plan.a.rows, plan.b.cols
    out = np.zeros((M, N), dtype=np.int64)
    s = plan.mode.scale
    for t in range(plan.n_rounds):
        rnd = plan.round(t)
        units = {}
        for slot, (m, k, n) in enumerate(rnd.products):
            r, c = divmod(slot, plan.grid_cols)
            ua, ub, _ = units.setdefault((r // s, c // s),
                                         ([0] * plan.mode.lanes, [0] * plan.mode.lanes, []))
            lane = (r % s) * s + c % s
            ua[lane] = int(plan.a.array[m, k])
            ub[lane] = int(plan.b.array[k, n])
        lane_out = {}
        for (ur, uc), (ua, ub, _) in units.items():
            for lane, p in enumerate(fused_multiply(ua, ub, plan.mode)):
                lr, lc = divmod(lane, s)
                lane_out[(ur * s + lr, uc * s + lc)] = p
        partials = []
        for slot, (m, k, n) in enumerate(rnd.products):
            partials.append(TaggedPartial((m, n), lane_out[divmod(slot, plan.grid_cols)]))
        for idx, value in flexible_reduce(partials, reduction_trace):
            check_accumulator(value)
            out[idx] = check_accumulator(int(out[idx]) + value)
    return out


def reference_matmul(a: DenseTile, b: DenseTile) -> np.ndarray:
    """Exact integer product computed with Python ints per output, no sub-multipliers."""
    if a.cols != b.rows:
        raise ValueError("inner dimensions differ")
    res = a.array.astype(object) @ b.array.astype(object)
    return np.array(res, dtype=np.int64).reshape(a.rows, b.cols)


# ----------------------------------------------------------------------------
# run_gemm


def _format_for(tile: DenseTile, cfg: ArchConfig) -> SparsityFormat:
    if not cfg.compression:
        return SparsityFormat.NONE
    sr = measure_tile(tile).sr_percent
    return select_format(sr, tile.mode, tile.rows, tile.cols)


def _roundtrip(tile: DenseTile, fmt: SparsityFormat) -> int:
    """Encode, serialize, parse and decode; returns the compressed size in bits."""
    ct = encode(tile, fmt)
    back = decode(from_bytes(to_bytes(ct)))
    if back != tile:
        raise SimulationFault("format codec failed to reproduce its input")
    return ct.total_bits


def _block_cols(a: DenseTile, b: DenseTile, cfg: ArchConfig) -> int:
    bits = a.mode.bits
    budget = cfg.sram_bytes * 8 - a.rows * a.cols * bits
    per_col = (b.rows + a.rows) * bits
    return int(min(b.cols, max(1, budget // per_col)))


def run_gemm(a: DenseTile, b: DenseTile, cfg: Optional[ArchConfig] = None,
             check: bool = False) -> SimReport:
    cfg = cfg or ArchConfig(mode=a.mode)
    if a.cols != b.rows:
        raise ValueError(f"inner dimensions differ: A is {a.rows}x{a.cols}, B is {b.rows}x{b.cols}")
    if a.mode is not cfg.mode or b.mode is not cfg.mode:
        raise ValueError(f"operands are {a.mode}/{b.mode}, array configured for {cfg.mode}")
    mode = cfg.mode
    rep = SimReport(label="flexible", mode=str(mode))
    result = np.zeros((a.rows, b.cols), dtype=np.int64)
    traffic = dict.fromkeys(("dram", "sram", "noc", "clb", "codec"), 0)
    ledger = rep.ledger
    a_fmt = _format_for(a, cfg)
    a_bits = _roundtrip(a, a_fmt)
    blk = _block_cols(a, b, cfg)
    lane_cap = cfg.lane_capacity
    for t, n0 in enumerate(range(0, b.cols, blk)):
        n1 = min(n0 + blk, b.cols)
        sub = DenseTile.from_array(b.array[:, n0:n1], mode)
        b_fmt = _format_for(sub, cfg)
        b_bits = _roundtrip(sub, b_fmt)
        plan = plan_mapping(a, sub, cfg.array_rows, cfg.array_cols, mode)
        noc = HmfNocModel(plan.grid_rows, plan.grid_cols, fanout=cfg.noc_fanout,
                          feedback_enabled=cfg.feedback_enabled,
                          ingress_per_cycle=cfg.noc_ingress_per_cycle)
        routed = route(plan, noc)
        block = execute_plan(plan)
        if check and not np.array_equal(block, reference_matmul(a, sub)):
            raise SimulationFault("array result differs from the reference product")
        result[:, n0:n1] = block
        nz_out = int(np.count_nonzero(block))
        out_fmt = SparsityFormat.NONE
        if cfg.compression:
            out_fmt = select_format(100 * (1 - nz_out / block.size), mode, a.rows, n1 - n0)
        out_bits = footprint_bits(a.rows, n1 - n0, nz_out, out_fmt, mode)
        in_bits = b_bits + (a_bits if t == 0 else 0)
        codec = in_bits + out_bits
        conversion = -(-codec // cfg.codec_bits_per_cycle) if cfg.compression else 0
        dram_bits = in_bits + out_bits
        dram = -(-dram_bits // (8 * cfg.dram_bytes_per_cycle))
        rounds = plan.n_rounds
        tile = TileReport((n0, n1), a_fmt, b_fmt, out_fmt, rounds, plan.n_products,
                          compute_cycles=rounds,
                          distribution_cycles=routed.distribution_cycles,
                          reduction_cycles=reduce_latency(plan.capacity) if rounds else 0,
                          format_conversion_cycles=conversion, dram_cycles=dram)
        rep.tiles.append(tile)
        c = routed.counters
        ledger["mac_op"] += plan.n_products
        ledger["sub_mult"] += plan.n_products * mode.limbs ** 2
        ledger["switch_traversal"] += c["node_traversals"]
        ledger["buffer_read"] += c["buffer_reads"]
        ledger["feedback_reuse"] += c["feedback_reuses"]
        ledger["mesh_hop"] += c["mesh_transfers"]
        sram = (c["buffer_reads"] + nz_out) * mode.bits
        ledger["sram_bit"] += sram
        ledger["dram_bit"] += dram_bits
        ledger["codec_bit"] += codec if cfg.compression else 0
        traffic["dram"] += dram_bits
        traffic["sram"] += sram
        traffic["noc"] += c["deliveries"] * mode.bits
        traffic["clb"] += c["unit_subword_deliveries"] * 4
        traffic["codec"] += codec if cfg.compression else 0
        rep.rounds += rounds
        rep.useful_products += plan.n_products
    for f in ("compute_cycles", "distribution_cycles", "reduction_cycles",
              "format_conversion_cycles", "dram_cycles", "total_cycles"):
        setattr(rep, f, sum(getattr(t, f) for t in rep.tiles))
    rep.mac_utilization = 100.0 * rep.useful_products / (rep.rounds * lane_cap) if rep.rounds else 0.0
    rep.traffic_bits = traffic
    rep.result = result
    log.debug("run_gemm %sx%sx%s %s: %d tiles, %d cycles", a.rows, a.cols, b.cols, mode,
              len(rep.tiles), rep.total_cycles)
    return rep


# ----------------------------------------------------------------------------
# baselines


class BaselineKind(enum.Enum):
    SYSTOLIC_WS = "systolic_ws"
    DOT_PRODUCT = "dot_product"


@dataclass(frozen=True)
class BaselineConfig:
    systolic_rows: int = 64
    systolic_cols: int = 64
    dp_cells: int = 16
    dp_width: int = 64
    native_mode: PrecisionMode = PrecisionMode.INT16


def useful_products(a: DenseTile, b: DenseTile) -> int:
    """Number of (m,k,n) with a[m,k] != 0 and b[k,n] != 0."""
    a_col = np.count_nonzero(a.array, axis=0).astype(np.int64)
    b_row = np.count_nonzero(b.array, axis=1).astype(np.int64)
    return int(a_col @ b_row)


def run_baseline(a: DenseTile, b: DenseTile, kind, cfg: Optional[ArchConfig] = None,
                 base: BaselineConfig = BaselineConfig()) -> SimReport:
    """Dense engines that multiply zeros like any other operand.

    SystolicWS keeps a K x M slice of A in an R x C array and streams the N
    columns of B; each tile costs R (weight load) + N + R + C - 2 (fill and
    drain) cycles. DotProductEngine reduces 64 inner-dimension elements per
    cell, 16 cells side by side over N, one output row per cycle.
    """
    kind = BaselineKind(kind)
    cfg = cfg or ArchConfig(mode=a.mode)
    if a.cols != b.rows:
        raise ValueError("inner dimensions differ")
    M, K, N = a.rows, a.cols, b.cols
    useful = useful_products(a, b)
    rep = SimReport(label=kind.value, mode=str(base.native_mode))
    if kind is BaselineKind.SYSTOLIC_WS:
        R, C = base.systolic_rows, base.systolic_cols
        tiles = math.ceil(K / R) * math.ceil(M / C)
        rep.compute_cycles = tiles * (R + N + R + C - 2)
        slots = tiles * N * R * C
        rep.rounds = tiles * N
    else:
        cycles = M * math.ceil(K / base.dp_width) * math.ceil(N / base.dp_cells)
        rep.compute_cycles = cycles
        slots = cycles * base.dp_width * base.dp_cells
        rep.rounds = cycles
    bits = base.native_mode.bits
    dram_bits = (M * K + K * N + M * N) * bits
    rep.dram_cycles = -(-dram_bits // (8 * cfg.dram_bytes_per_cycle))
    rep.total_cycles = max(rep.compute_cycles, rep.dram_cycles)
    rep.useful_products = useful
    rep.mac_utilization = 100.0 * useful / slots if slots else 0.0
    rep.traffic_bits = {"dram": dram_bits, "sram": 0, "noc": 0, "clb": 0, "codec": 0}
    rep.ledger["mac_op"] = slots
    rep.ledger["dram_bit"] = dram_bits
    res = reference_matmul(a, b)
    _check_acc_array(res, "a baseline output")
    rep.result = res
    return rep


# ----------------------------------------------------------------------------
# layer sequences


@dataclass(frozen=True)
class LayerSpec:
    """One GEMM layer: weights (m x k) times activations (k x n)."""
    name: str
    m: int
    k: int
    n: int
    weight_sr: float = 0.0
    input_sr: float = 0.0
    mode: Optional[PrecisionMode] = None
    prune: float = 0.0
    values: str = "random"          # "extreme" fills both operands with the mode minimum

    def __post_init__(self):
        if self.values not in ("random", "extreme"):
            raise ConfigError(f"{self.name}.values", "expected 'random' or 'extreme'")
        for dim in ("m", "k", "n"):
            if not isinstance(getattr(self, dim), int) or getattr(self, dim) < 1:
                raise ConfigError(f"{self.name}.{dim}", "layer dimensions must be positive integers")
        for key in ("weight_sr", "input_sr"):
            if not 0 <= getattr(self, key) <= 100:
                raise ConfigError(f"{self.name}.{key}", "sparsity must be within [0, 100]")
        if not 0 <= self.prune < 1:
            raise ConfigError(f"{self.name}.prune", "pruning ratio must be within [0, 1)")
        if self.mode is not None:
            try:
                object.__setattr__(self, "mode", PrecisionMode.parse(self.mode))
            except ValueError as exc:
                raise ConfigError(f"{self.name}.mode", str(exc)) from None


def mlp_layers(width: int, depth: int, batch: int, in_dim: Optional[int] = None,
               out_dim: Optional[int] = None, **kw) -> list:
    dims = [in_dim or width] + [width] * (depth - 1) + [out_dim or width]
    return [LayerSpec(f"fc{i}", dims[i + 1], dims[i], batch, **kw) for i in range(depth)]


def with_pruning(layers: Sequence[LayerSpec], ratio: float) -> list:
    """Structured pruning of every layer's output rows except the last."""
    return [replace(l, prune=ratio if i < len(layers) - 1 else 0.0)
            for i, l in enumerate(layers)]


@dataclass
class SequenceReport:
    layers: list                     # (LayerSpec, effective dims, SimReport)
    totals: SimReport

    @property
    def total_cycles(self) -> int:
        return self.totals.total_cycles


def run_layer_sequence(layers: Sequence[LayerSpec], cfg: Optional[ArchConfig] = None,
                       seed: int = 0) -> SequenceReport:
    """Run layers in order; pruning a layer's outputs shrinks the next layer's K.

    Operand values are seeded synthetic tiles at each layer's sparsity; the
    chain only carries shapes, not activations.
    """
    cfg = cfg or ArchConfig()
    done = []
    totals = SimReport(label="sequence")
    prev_m = prev_m_eff = None
    for i, spec in enumerate(layers):
        if not isinstance(spec, LayerSpec):
            raise ConfigError(f"layer[{i}]", "not a layer specification")
        mode = spec.mode or cfg.mode
        k = spec.k
        if prev_m is not None and spec.k == prev_m:
            k = prev_m_eff
        w = synth_sparse(spec.m, k, mode, spec.weight_sr, seed + 2 * i)
        x = synth_sparse(k, spec.n, mode, spec.input_sr, seed + 2 * i + 1)
        if spec.values == "extreme":
            # worst-case magnitudes stress the 48-bit accumulators
            w = DenseTile.from_array(np.where(w.array != 0, mode.lo, 0), mode)
            x = DenseTile.from_array(np.where(x.array != 0, mode.lo, 0), mode)
        if spec.prune:
            w = prune_rows(w, spec.prune)
        rep = run_gemm(w, x, replace(cfg, mode=mode))
        rep.label = spec.name
        rep.result = None          # keep sequence reports small
        done.append((spec, (w.rows, k, spec.n), rep))
        prev_m, prev_m_eff = spec.m, w.rows
        for f in ("compute_cycles", "distribution_cycles", "reduction_cycles",
                  "format_conversion_cycles", "dram_cycles", "total_cycles", "rounds",
                  "useful_products"):
            setattr(totals, f, getattr(totals, f) + getattr(rep, f))
        for key, v in rep.traffic_bits.items():
            totals.traffic_bits[key] = totals.traffic_bits.get(key, 0) + v
        for key, v in rep.ledger.items():
            totals.ledger[key] += v
    # sequence utilization weights each layer by its rounds x capacity
    slots = sum(r.rounds * replace(cfg, mode=s.mode or cfg.mode).lane_capacity
                for s, _, r in done)
    totals.mac_utilization = 100.0 * totals.useful_products / slots if slots else 0.0
    return SequenceReport(done, totals)


# ----------------------------------------------------------------------------
# energy


def energy_report(report: SimReport, weights: dict) -> dict:
    """Per-class energy = event count x weight, plus a ``total`` entry."""
    missing = [k for k in ENERGY_CLASSES if k not in weights]
    if missing:
        raise ConfigError(missing[0], "no energy weight for this event class")
    out = {}
    for k in ENERGY_CLASSES:
        w = weights[k]
        if w < 0:
            raise ConfigError(k, "energy weights must be non-negative")
        out[k] = report.ledger.get(k, 0) * w
    out["total"] = sum(out[k] for k in ENERGY_CLASSES)
    return out
