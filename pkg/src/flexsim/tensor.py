"""Integer tiles, precision modes, fetch geometry and online sparsity measurement."""

from __future__ import annotations

import enum
import math
import struct
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

FETCH_PORT_BITS = 64
TILE_MAGIC = b"FXT1"


class PrecisionMode(enum.Enum):
    INT4 = 4
    INT8 = 8
    INT16 = 16

    @property
    def bits(self) -> int:
        return self.value

    @property
    def lo(self) -> int:
        return -(1 << (self.bits - 1))

    @property
    def hi(self) -> int:
        return (1 << (self.bits - 1)) - 1

    @property
    def limbs(self) -> int:
        """4-bit limbs per element."""
        return self.bits // 4

    @property
    def lanes(self) -> int:
        """Independent products one MAC unit produces per cycle."""
        return 256 // (self.bits * self.bits)

    @property
    def scale(self) -> int:
        """Side length of the lane block a unit exposes (1, 2 or 4)."""
        return 16 // self.bits

    @classmethod
    def parse(cls, text: "str | int | PrecisionMode") -> "PrecisionMode":
        if isinstance(text, PrecisionMode):
            return text
        if isinstance(text, int):
            return cls(text)
        key = str(text).strip().lower()
        if key.startswith("int"):
            key = key[3:]
        try:
            return cls(int(key))
        except (ValueError, KeyError):
            raise ValueError(f"unknown precision mode {text!r}") from None

    def __str__(self) -> str:
        return f"int{self.bits}"


def as_fraction(x) -> Fraction:
    # repr() keeps the decimal the caller wrote (0.1 stays 1/10).
    if isinstance(x, (int, Fraction)):
        return Fraction(x)
    return Fraction(repr(float(x)))


def round_half_up(x) -> int:
    return math.floor(as_fraction(x) + Fraction(1, 2))


class DenseTile:
    """Immutable row-major integer matrix at a declared precision."""

    __slots__ = ("rows", "cols", "mode", "_data")

    def __init__(self, rows: int, cols: int, mode: PrecisionMode, values):
        mode = PrecisionMode.parse(mode)
        if rows < 1 or cols < 1:
            raise ValueError("tile dimensions must be positive")
        arr = np.asarray(values, dtype=np.int64).reshape(-1)
        if arr.size != rows * cols:
            raise ValueError(f"expected {rows * cols} values, got {arr.size}")
        if arr.size and (arr.min() < mode.lo or arr.max() > mode.hi):
            raise ValueError(f"value out of range for {mode}")
        arr = arr.reshape(rows, cols).copy()
        arr.flags.writeable = False
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "cols", cols)
        object.__setattr__(self, "mode", mode)
        object.__setattr__(self, "_data", arr)

    def __setattr__(self, name, value):
        raise AttributeError("DenseTile is immutable")

    @classmethod
    def from_array(cls, array, mode) -> "DenseTile":
        arr = np.asarray(array)
        if arr.ndim != 2:
            raise ValueError("expected a 2-D array")
        return cls(arr.shape[0], arr.shape[1], mode, arr)

    @property
    def array(self) -> np.ndarray:
        """Read-only (rows, cols) int64 view."""
        return self._data

    @property
    def values(self) -> tuple:
        return tuple(int(v) for v in self._data.reshape(-1))

    @property
    def nnz(self) -> int:
        return int(np.count_nonzero(self._data))

    @property
    def shape(self) -> tuple:
        return (self.rows, self.cols)

    def __eq__(self, other):
        if not isinstance(other, DenseTile):
            return NotImplemented
        return (self.mode is other.mode and self.shape == other.shape
                and np.array_equal(self._data, other._data))

    def __hash__(self):
        return hash((self.rows, self.cols, self.mode, self._data.tobytes()))

    def __repr__(self):
        return f"DenseTile({self.rows}x{self.cols}, {self.mode}, nnz={self.nnz})"


@dataclass(frozen=True)
class FetchGeometry:
    mode: PrecisionMode
    bits_per_fetch: int
    elems_per_fetch: int
    fetch_port_bits: int = FETCH_PORT_BITS
    units: int = 1

    @property
    def array_elems_per_fetch(self) -> int:
        return self.elems_per_fetch * self.units


def fetch_geometry(mode, units: int = 1) -> FetchGeometry:
    """Operand fetch shape of one MAC unit port (or ``units`` ports side by side).

    A unit receives 16, 32 or 64 bits per operand fetch in 16-, 8- and 4-bit
    mode, i.e. one element per lane.
    """
    mode = PrecisionMode.parse(mode)
    if units < 1:
        raise ValueError("units must be >= 1")
    elems = mode.lanes
    return FetchGeometry(mode=mode, bits_per_fetch=elems * mode.bits,
                         elems_per_fetch=elems, units=units)


def pack_word(elements: Sequence[int], mode) -> int:
    """Pack signed elements into one unsigned bit pattern, element 0 in the low bits."""
    mode = PrecisionMode.parse(mode)
    mask = (1 << mode.bits) - 1
    word = 0
    for i, e in enumerate(elements):
        e = int(e)
        if not mode.lo <= e <= mode.hi:
            raise ValueError(f"element {e} not representable in {mode}")
        word |= (e & mask) << (i * mode.bits)
    return word


def unpack_word(word: int, mode, count: int) -> tuple:
    mode = PrecisionMode.parse(mode)
    mask = (1 << mode.bits) - 1
    out = []
    for i in range(count):
        raw = (word >> (i * mode.bits)) & mask
        out.append(raw - (1 << mode.bits) if raw > mode.hi else raw)
    return tuple(out)


def fetch_words(tile: DenseTile, geometry: FetchGeometry) -> np.ndarray:
    """Split a tile's row-major values into fetch words; the tail is zero-padded."""
    per = geometry.array_elems_per_fetch
    flat = tile.array.reshape(-1)
    n_fetch = -(-flat.size // per)
    words = np.zeros(n_fetch * per, dtype=np.int64)
    words[: flat.size] = flat
    return words.reshape(n_fetch, per)


@dataclass(frozen=True)
class SparsityMeasurement:
    n_fetch: int
    nnz_total: int
    elems_per_fetch: int
    sr_percent: float

    @property
    def sr_fraction(self) -> Fraction:
        return 1 - Fraction(self.nnz_total, self.n_fetch * self.elems_per_fetch)


def measure_sparsity(words: Iterable, geometry: FetchGeometry) -> SparsityMeasurement:
    """Sparsity ratio from per-fetch popcounts of the nonzero mask."""
    per = geometry.array_elems_per_fetch
    n_fetch = 0
    nnz = 0
    for word in words:
        word = np.asarray(word)
        if word.shape != (per,):
            raise ValueError(f"fetch word of length {word.size}, geometry expects {per}")
        nnz += int(np.count_nonzero(word))
        n_fetch += 1
    if n_fetch == 0:
        raise ValueError("sparsity is undefined for an empty fetch sequence")
    sr = (1 - Fraction(nnz, n_fetch * per)) * 100
    return SparsityMeasurement(n_fetch=n_fetch, nnz_total=nnz, elems_per_fetch=per,
                               sr_percent=float(sr))


def measure_tile(tile: DenseTile, geometry: FetchGeometry | None = None) -> SparsityMeasurement:
    geometry = geometry or fetch_geometry(tile.mode)
    return measure_sparsity(fetch_words(tile, geometry), geometry)


def synth_sparse(rows: int, cols: int, mode, target_sr, seed: int) -> DenseTile:
    """Random tile with exactly ``round(rows*cols*target_sr/100)`` zeros."""
    mode = PrecisionMode.parse(mode)
    if rows < 1 or cols < 1:
        raise ValueError("tile dimensions must be positive")
    sr = as_fraction(target_sr)
    if not 0 <= sr <= 100:
        raise ValueError(f"target sparsity {target_sr} outside [0, 100]")
    n = rows * cols
    n_zero = round_half_up(n * sr / 100)
    rng = np.random.default_rng(seed)
    # Shift [lo, hi-1] onto the nonzero range [lo, -1] u [1, hi].
    values = rng.integers(mode.lo, mode.hi, size=n, dtype=np.int64)
    values[values >= 0] += 1
    zero_at = rng.permutation(n)[:n_zero]
    values[zero_at] = 0
    return DenseTile(rows, cols, mode, values)


def prune_rows(tile: DenseTile, ratio, seed: int | None = None) -> DenseTile:
    """Structured pruning: drop ``round(rows*ratio)`` whole rows (the last ones)."""
    keep = tile.rows - round_half_up(tile.rows * as_fraction(ratio))
    if keep < 1:
        raise ValueError("pruning would remove every row")
    return DenseTile.from_array(tile.array[:keep], tile.mode)


# --- tile files ---------------------------------------------------------------

def write_tile_text(tile: DenseTile, path) -> None:
    lines = [f"{tile.rows} {tile.cols} {tile.mode}"]
    lines += [" ".join(str(int(v)) for v in row) for row in tile.array]
    Path(path).write_text("\n".join(lines) + "\n")


def read_tile_text(path) -> DenseTile:
    text = Path(path).read_text().split()
    if len(text) < 3:
        raise ValueError(f"{path}: missing 'rows cols mode' header")
    rows, cols, mode = int(text[0]), int(text[1]), PrecisionMode.parse(text[2])
    values = [int(v) for v in text[3:]]
    return DenseTile(rows, cols, mode, values)


def write_tile_binary(tile: DenseTile, path) -> None:
    """16-byte header (magic, rows, cols, bits; little-endian u32) then packed values.

    Int4 packs two elements per byte (low nibble first); Int8/Int16 use
    little-endian two's complement.
    """
    header = TILE_MAGIC + struct.pack("<III", tile.rows, tile.cols, tile.mode.bits)
    flat = tile.array.reshape(-1)
    if tile.mode is PrecisionMode.INT4:
        nib = (flat & 0xF).astype(np.uint8)
        if nib.size % 2:
            nib = np.append(nib, np.uint8(0))
        body = (nib[0::2] | (nib[1::2] << 4)).astype(np.uint8).tobytes()
    else:
        body = flat.astype("<i1" if tile.mode is PrecisionMode.INT8 else "<i2").tobytes()
    Path(path).write_bytes(header + body)


def read_tile_binary(path) -> DenseTile:
    blob = Path(path).read_bytes()
    if len(blob) < 16 or blob[:4] != TILE_MAGIC:
        raise ValueError(f"{path}: not a binary tile file")
    rows, cols, bits = struct.unpack("<III", blob[4:16])
    mode = PrecisionMode(bits)
    n = rows * cols
    body = blob[16:]
    if mode is PrecisionMode.INT4:
        raw = np.frombuffer(body, dtype=np.uint8)
        nib = np.empty(raw.size * 2, dtype=np.int64)
        nib[0::2] = raw & 0xF
        nib[1::2] = raw >> 4
        nib = nib[:n]
        values = np.where(nib > 7, nib - 16, nib)
    else:
        values = np.frombuffer(body, dtype="<i1" if mode is PrecisionMode.INT8 else "<i2")
    if values.size != n:
        raise ValueError(f"{path}: expected {n} values, found {values.size}")
    return DenseTile(rows, cols, mode, values)


def load_tile(path) -> DenseTile:
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head == TILE_MAGIC:
        return read_tile_binary(path)
    return read_tile_text(path)
