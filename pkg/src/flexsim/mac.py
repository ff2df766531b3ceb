"""Bit-scalable MAC unit: sixteen 4x4-bit sub-multipliers fused by shift-add.

An element of b bits splits into b/4 limbs; every limb is unsigned except the
most significant one, which carries the sign. A lane product is the sum of
its limb cross products shifted by 4*(i+j), so a 16-bit product uses all 16
sub-multipliers, an 8-bit product 4 and a 4-bit product 1.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import SimulationFault
from .tensor import PrecisionMode, unpack_word

ACC_BITS = 48
ACC_MIN = -(1 << (ACC_BITS - 1))
ACC_MAX = (1 << (ACC_BITS - 1)) - 1

SUBMULTIPLIERS = 16
SHIFTERS_UNOPTIMIZED = 24
SHIFTERS_OPTIMIZED = 16


def brick_product(x: int, y: int) -> int:
    """One 4x4-bit sub-multiplier: shift-add over the bits of |y|.

    Operands are limbs in [-8, 15]: unsigned low limbs or a signed top limb.
    """
    neg = (x < 0) != (y < 0)
    mx, my = abs(x), abs(y)
    acc = 0
    for bit in range(5):
        if (my >> bit) & 1:
            acc += mx << bit
    return -acc if neg else acc


_LIMB_OFFSET = 8
_BRICK_LUT = np.array([[brick_product(x, y) for y in range(-8, 16)]
                       for x in range(-8, 16)], dtype=np.int64)


def split_limbs(values: np.ndarray, mode: PrecisionMode) -> list:
    """Limbs of each element, least significant first; the top limb is signed."""
    values = np.asarray(values, dtype=np.int64)
    n = mode.limbs
    out = [(values >> (4 * t)) & 0xF for t in range(n - 1)]
    out.append(values >> (4 * (n - 1)))     # arithmetic shift keeps the sign
    return out


def fused_products(a, b, mode, with_partials: bool = False):
    """Vectorized lane products built only from sub-multiplier outputs.

    Returns the product array, or ``(products, partial_count)`` when
    ``with_partials`` is set (partials used per product: limbs**2).
    """
    mode = PrecisionMode.parse(mode)
    la, lb = split_limbs(a, mode), split_limbs(b, mode)
    acc = np.zeros(np.shape(a), dtype=np.int64)
    partials = 0
    for i, ai in enumerate(la):
        for j, bj in enumerate(lb):
            acc += _BRICK_LUT[ai + _LIMB_OFFSET, bj + _LIMB_OFFSET] << (4 * (i + j))
            partials += 1
    return (acc, partials) if with_partials else acc


@dataclass(frozen=True)
class MacUnitConfig:
    mode: PrecisionMode
    shifter_sharing: bool = True

    @property
    def lanes(self) -> int:
        return self.mode.lanes

    def __post_init__(self):
        if self.lanes * self.mode.bits ** 2 != 256:
            raise ValueError("lane count does not fill the 4x4 sub-multiplier grid")


def _check_word(word, mode: PrecisionMode, name: str) -> np.ndarray:
    if isinstance(word, (int, np.integer)):
        if not 0 <= word < 1 << (mode.bits * mode.lanes):
            raise ValueError(f"{name}: packed word wider than {mode.lanes} x {mode.bits} bits")
        word = unpack_word(int(word), mode, mode.lanes)
    arr = np.asarray(list(word), dtype=np.int64)
    if arr.ndim != 1 or arr.size != mode.lanes:
        raise ValueError(f"{name}: {mode} word needs {mode.lanes} lanes, got {arr.size}")
    if arr.size and (arr.min() < mode.lo or arr.max() > mode.hi):
        raise ValueError(f"{name}: lane value outside {mode} range")
    return arr


def fused_multiply(a_word, b_word, mode) -> tuple:
    """Lane products of two operand words.

    A word is either a sequence of ``lanes`` signed elements or the packed
    unsigned bit pattern (element 0 in the low bits).
    """
    mode = PrecisionMode.parse(mode)
    a = _check_word(a_word, mode, "a_word")
    b = _check_word(b_word, mode, "b_word")
    return tuple(int(p) for p in fused_products(a, b, mode))


def check_accumulator(value: int) -> int:
    if not ACC_MIN <= value <= ACC_MAX:
        raise SimulationFault(f"accumulator overflow: {value} exceeds {ACC_BITS}-bit range")
    return value


def unit_accumulate(products: Sequence[int], mode=None, acc: int = 0) -> int:
    """Dot-product accumulation of one cycle's lane products."""
    if mode is not None:
        mode = PrecisionMode.parse(mode)
        if len(products) != mode.lanes:
            raise ValueError(f"{mode} unit produces {mode.lanes} lane products per cycle")
    total = acc
    for p in products:
        total = check_accumulator(total + int(p))
    return total


class MacUnit:
    """Stateful unit with a 48-bit accumulator and an optional trace."""

    def __init__(self, mode, unit_id: int = 0, shifter_sharing: bool = True,
                 keep_trace: bool = False):
        self.config = MacUnitConfig(PrecisionMode.parse(mode), shifter_sharing)
        self.unit_id = unit_id
        self.acc = 0
        self.cycles = 0
        self.trace = [] if keep_trace else None

    @property
    def mode(self) -> PrecisionMode:
        return self.config.mode

    def reset(self) -> None:
        self.acc = 0

    def step(self, a_word, b_word) -> tuple:
        products = fused_multiply(a_word, b_word, self.mode)
        self.acc = unit_accumulate(products, self.mode, self.acc)
        if self.trace is not None:
            self.trace.append((self.cycles, self.unit_id, products, self.acc))
        self.cycles += 1
        return products


def write_unit_trace_csv(trace, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["cycle", "unit_id", "lane_products", "accumulator"])
        for cycle, unit_id, products, acc in trace:
            w.writerow([cycle, unit_id, " ".join(str(p) for p in products), acc])


# --- shifter structure ------------------------------------------------------------

@dataclass(frozen=True)
class ShifterCensus:
    per_unit: int
    array_total: int
    optimized: bool


def shifter_census(array_rows: int, array_cols: int, optimized: bool) -> ShifterCensus:
    if array_rows < 1 or array_cols < 1:
        raise ValueError("array dimensions must be positive")
    per = len(build_shifter_graph(optimized).shifters)
    return ShifterCensus(per_unit=per, array_total=per * array_rows * array_cols,
                         optimized=optimized)


@dataclass(frozen=True)
class Shifter:
    name: str
    level: int
    inputs: tuple          # brick coordinates (i, j) or group ids feeding it
    shift16: int           # shift amount in 16-bit mode
    shift8: int            # shift amount in 8-bit mode


@dataclass
class ShifterGraph:
    """Shift-add tree of one unit.

    Bricks are grouped 2x2 by (i//2, j//2). Level 1 aligns bricks inside a
    group (4*(i%2 + j%2)); level 2 aligns groups (8*(i//2 + j//2)). The
    unoptimized tree gives each brick its own shifter and each group one
    shifter per fused mode; the shared tree pre-adds the two cross bricks of
    a group, which always shift by the same amount, and uses one
    mode-configurable shifter per group.
    """
    optimized: bool
    shifters: list = field(default_factory=list)

    def evaluate(self, a_word, b_word, mode) -> tuple:
        """Lane products computed through the graph (shifters bypassed in 4-bit mode)."""
        mode = PrecisionMode.parse(mode)
        if mode is PrecisionMode.INT4:
            return tuple(brick_product(int(x), int(y)) for x, y in zip(a_word, b_word))
        out = []
        for x, y in zip(a_word, b_word):
            lx = [int(v) for v in split_limbs(np.array(x), mode)]
            ly = [int(v) for v in split_limbs(np.array(y), mode)]
            if mode is PrecisionMode.INT8:
                out.append(self._group_sum(lx, ly, 0, 0, fused16=False))
            else:
                out.append(sum(self._group_sum(lx[2 * gi: 2 * gi + 2], ly[2 * gj: 2 * gj + 2],
                                               gi, gj, fused16=True)
                               for gi in range(2) for gj in range(2)))
        return tuple(out)

    def _group_sum(self, la, lb, gi, gj, fused16):
        p = {(ii, jj): brick_product(la[ii], lb[jj]) for ii in range(2) for jj in range(2)}
        if self.optimized:
            s = p[0, 0] + ((p[0, 1] + p[1, 0]) << 4) + (p[1, 1] << 8)
        else:
            s = sum(v << (4 * (ii + jj)) for (ii, jj), v in p.items())
        return s << (8 * (gi + gj)) if fused16 else s


def build_shifter_graph(optimized: bool) -> ShifterGraph:
    g = ShifterGraph(optimized=optimized)
    for gi in range(2):
        for gj in range(2):
            tag = f"g{gi}{gj}"
            bricks = [(2 * gi + ii, 2 * gj + jj) for ii in range(2) for jj in range(2)]
            if optimized:
                g.shifters.append(Shifter(f"{tag}.s0", 1, (bricks[0],), 0, 0))
                g.shifters.append(Shifter(f"{tag}.s4", 1, (bricks[1], bricks[2]), 4, 4))
                g.shifters.append(Shifter(f"{tag}.s8", 1, (bricks[3],), 8, 8))
                g.shifters.append(Shifter(f"{tag}.align", 2, (tag,), 8 * (gi + gj), 0))
            else:
                for (i, j) in bricks:
                    amt = 4 * (i % 2 + j % 2)
                    g.shifters.append(Shifter(f"{tag}.b{i}{j}", 1, ((i, j),), amt, amt))
                g.shifters.append(Shifter(f"{tag}.align16", 2, (tag,), 8 * (gi + gj), 8 * (gi + gj)))
                g.shifters.append(Shifter(f"{tag}.align8", 2, (tag,), 0, 0))
    return g
