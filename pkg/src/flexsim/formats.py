"""Bit-exact None/COO/CSR/Bitmap codecs, the footprint model and the format selector.

Stream widths for an r x c tile at b bits with z nonzeros::

    i_r = ceil(log2 r)   i_c = ceil(log2 c)   p = ceil(log2(r*c + 1))
    None    r*c*b
    COO     z*(b + i_r + i_c)
    CSR     z*(b + i_c) + (r + 1)*p        (CSC: z*(b + i_r) + (c + 1)*p)
    Bitmap  r*c + z*b

The per-tile header (format, dims, mode, nnz) is identical for every format
and is not part of the footprint.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

import numpy as np

from .errors import FormatError
from .tensor import DenseTile, PrecisionMode, as_fraction, round_half_up

COMPRESSED_MAGIC = b"FXC1"
_HEADER = struct.Struct("<4sBBBBIII")


class SparsityFormat(enum.Enum):
    NONE = 0
    COO = 1
    CSR = 2
    BITMAP = 3

    @classmethod
    def parse(cls, text) -> "SparsityFormat":
        if isinstance(text, SparsityFormat):
            return text
        key = str(text).strip().upper()
        if key in ("CSC", "CSR/CSC"):
            key = "CSR"
        try:
            return cls[key]
        except KeyError:
            raise ValueError(f"unknown sparsity format {text!r}") from None

    @property
    def label(self) -> str:
        return {"NONE": "None", "BITMAP": "Bitmap"}.get(self.name, self.name)


# Cheapest decode first; breaks exact footprint ties.
FORMAT_PREFERENCE = (SparsityFormat.NONE, SparsityFormat.BITMAP,
                     SparsityFormat.CSR, SparsityFormat.COO)


def index_bits(n: int) -> int:
    """ceil(log2 n) for n >= 1."""
    return (n - 1).bit_length()


def pointer_bits(rows: int, cols: int) -> int:
    return (rows * cols).bit_length()


def footprint_bits(rows: int, cols: int, nnz: int, fmt, mode, orientation: str = "row") -> int:
    fmt = SparsityFormat.parse(fmt)
    mode = PrecisionMode.parse(mode)
    if rows < 1 or cols < 1:
        raise ValueError("tile dimensions must be positive")
    if not 0 <= nnz <= rows * cols:
        raise ValueError(f"nnz={nnz} outside [0, {rows * cols}]")
    b = mode.bits
    if fmt is SparsityFormat.NONE:
        return rows * cols * b
    if fmt is SparsityFormat.COO:
        return nnz * (b + index_bits(rows) + index_bits(cols))
    if fmt is SparsityFormat.CSR:
        p = pointer_bits(rows, cols)
        if orientation == "col":
            return nnz * (b + index_bits(rows)) + (cols + 1) * p
        return nnz * (b + index_bits(cols)) + (rows + 1) * p
    return rows * cols + nnz * b


def nnz_for_sr(rows: int, cols: int, sr) -> int:
    sr = as_fraction(sr)
    if not 0 <= sr <= 100:
        raise ValueError(f"sparsity ratio {sr} outside [0, 100]")
    return round_half_up(rows * cols * (1 - sr / 100))


def best_format(rows: int, cols: int, nnz: int, mode) -> SparsityFormat:
    costs = [footprint_bits(rows, cols, nnz, f, mode) for f in FORMAT_PREFERENCE]
    return FORMAT_PREFERENCE[costs.index(min(costs))]


def select_format(sr, mode, rows: int, cols: int) -> SparsityFormat:
    """Format with the smallest footprint at the nnz implied by ``sr``."""
    return best_format(rows, cols, nnz_for_sr(rows, cols, sr), mode)


@dataclass(frozen=True)
class CrossoverInterval:
    """Sparsity interval with a constant optimal format.

    Covers ``(lo, hi]``, or ``[lo, hi]`` when ``lo_inclusive`` (only the first).
    """
    lo: Fraction
    hi: Fraction
    lo_inclusive: bool
    format: SparsityFormat

    def __contains__(self, sr) -> bool:
        sr = as_fraction(sr)
        above = sr >= self.lo if self.lo_inclusive else sr > self.lo
        return above and sr <= self.hi


def crossover_table(mode, rows: int, cols: int) -> list[CrossoverInterval]:
    mode = PrecisionMode.parse(mode)
    n = rows * cols
    z = np.arange(n, -1, -1, dtype=np.int64)          # nnz as sr goes 0 -> 100
    b = mode.bits
    p = pointer_bits(rows, cols)
    costs = np.stack([
        np.full_like(z, n * b),                                  # None
        n + z * b,                                               # Bitmap
        z * (b + index_bits(cols)) + (rows + 1) * p,             # CSR
        z * (b + index_bits(rows) + index_bits(cols)),           # COO
    ], axis=1)
    choice = np.argmin(costs, axis=1)   # first minimum = preference order

    def boundary(k):
        # sr at which rows*cols*(1 - sr/100) == k + 1/2
        return 100 * (1 - Fraction(2 * k + 1, 2 * n))

    out = []
    start = 0
    for i in range(1, n + 2):
        if i == n + 1 or choice[i] != choice[start]:
            nnz_hi, nnz_lo = int(z[start]), int(z[i - 1])
            lo = Fraction(0) if nnz_hi == n else boundary(nnz_hi)
            hi = Fraction(100) if nnz_lo == 0 else boundary(nnz_lo - 1)
            out.append(CrossoverInterval(lo, hi, nnz_hi == n,
                                         FORMAT_PREFERENCE[int(choice[start])]))
            start = i
    return out


def first_compressed_sr(mode, rows: int, cols: int) -> Fraction:
    """Lower end of the first sparsity interval where a compressed format wins."""
    for iv in crossover_table(mode, rows, cols):
        if iv.format is not SparsityFormat.NONE:
            return iv.lo
    return Fraction(100)


# --- codecs --------------------------------------------------------------------

def _ro(arr) -> np.ndarray:
    a = np.asarray(arr, dtype=np.int64).reshape(-1).copy()
    a.flags.writeable = False
    return a


_EMPTY = _ro([])


@dataclass(frozen=True, eq=False)
class CompressedTile:
    format: SparsityFormat
    mode: PrecisionMode
    rows: int
    cols: int
    nnz: int
    values: np.ndarray = field(default=_EMPTY)
    col_idx: np.ndarray = field(default=_EMPTY)
    row_idx: np.ndarray = field(default=_EMPTY)
    pointers: np.ndarray = field(default=_EMPTY)
    bitmap: np.ndarray = field(default=_EMPTY)
    orientation: str = "row"

    def stream_widths(self) -> dict:
        return {
            "values": self.mode.bits,
            "col_idx": index_bits(self.cols),
            "row_idx": index_bits(self.rows),
            "pointers": pointer_bits(self.rows, self.cols),
            "bitmap": 1,
        }

    def stream_bits(self) -> dict:
        w = self.stream_widths()
        return {name: len(getattr(self, name)) * w[name] for name in STREAM_ORDER}

    @property
    def payload_bits(self) -> int:
        return len(self.values) * self.mode.bits

    @property
    def metadata_bits(self) -> int:
        sb = self.stream_bits()
        return sum(v for k, v in sb.items() if k != "values")

    @property
    def total_bits(self) -> int:
        return self.payload_bits + self.metadata_bits


STREAM_ORDER = ("values", "col_idx", "row_idx", "pointers", "bitmap")


def encode(tile: DenseTile, fmt, orientation: str = "row") -> CompressedTile:
    fmt = SparsityFormat.parse(fmt)
    a = tile.array
    common = dict(format=fmt, mode=tile.mode, rows=tile.rows, cols=tile.cols, nnz=tile.nnz)
    if fmt is SparsityFormat.NONE:
        return CompressedTile(values=_ro(a), **common)
    if fmt is SparsityFormat.BITMAP:
        mask = a != 0
        return CompressedTile(values=_ro(a[mask]), bitmap=_ro(mask), **common)
    r, c = np.nonzero(a)          # row-major order
    if fmt is SparsityFormat.COO:
        return CompressedTile(values=_ro(a[r, c]), col_idx=_ro(c), row_idx=_ro(r), **common)
    if orientation == "col":
        c, r = np.nonzero(a.T)    # column-major order
        ptr = np.concatenate([[0], np.cumsum(np.bincount(c, minlength=tile.cols))])
        return CompressedTile(values=_ro(a[r, c]), row_idx=_ro(r), pointers=_ro(ptr),
                              orientation="col", **common)
    if orientation != "row":
        raise ValueError(f"unknown orientation {orientation!r}")
    ptr = np.concatenate([[0], np.cumsum(np.bincount(r, minlength=tile.rows))])
    return CompressedTile(values=_ro(a[r, c]), col_idx=_ro(c), pointers=_ro(ptr), **common)


def expected_stream_lengths(fmt: SparsityFormat, rows: int, cols: int, nnz: int,
                            orientation: str = "row") -> dict:
    n = {k: 0 for k in STREAM_ORDER}
    if fmt is SparsityFormat.NONE:
        n["values"] = rows * cols
    elif fmt is SparsityFormat.BITMAP:
        n["values"], n["bitmap"] = nnz, rows * cols
    elif fmt is SparsityFormat.COO:
        n["values"] = n["col_idx"] = n["row_idx"] = nnz
    elif orientation == "col":
        n["values"] = n["row_idx"] = nnz
        n["pointers"] = cols + 1
    else:
        n["values"] = n["col_idx"] = nnz
        n["pointers"] = rows + 1
    return n


def _check(ct: CompressedTile) -> None:
    want = expected_stream_lengths(ct.format, ct.rows, ct.cols, ct.nnz, ct.orientation)
    for name in STREAM_ORDER:
        got = len(getattr(ct, name))
        if got != want[name]:
            raise FormatError(name, f"length {got}, header implies {want[name]}")
    v = ct.values
    if v.size and (v.min() < ct.mode.lo or v.max() > ct.mode.hi):
        raise FormatError("values", f"element outside {ct.mode} range")
    if ct.format is not SparsityFormat.NONE and np.any(v == 0):
        raise FormatError("values", "explicit zero in a compressed value stream")
    if ct.col_idx.size and (ct.col_idx.min() < 0 or ct.col_idx.max() >= ct.cols):
        raise FormatError("col_idx", "column index out of range")
    if ct.row_idx.size and (ct.row_idx.min() < 0 or ct.row_idx.max() >= ct.rows):
        raise FormatError("row_idx", "row index out of range")
    if ct.pointers.size:
        p = ct.pointers
        if p[0] != 0 or p[-1] != ct.nnz or np.any(np.diff(p) < 0):
            raise FormatError("pointers", "pointer stream is not a monotone 0..nnz sequence")
    if ct.bitmap.size:
        if np.any((ct.bitmap != 0) & (ct.bitmap != 1)):
            raise FormatError("bitmap", "non-binary entry")
        if int(ct.bitmap.sum()) != ct.nnz:
            raise FormatError("bitmap", f"popcount {int(ct.bitmap.sum())} != nnz {ct.nnz}")


def decode(ct: CompressedTile) -> DenseTile:
    _check(ct)
    out = np.zeros((ct.rows, ct.cols), dtype=np.int64)
    fmt = ct.format
    if fmt is SparsityFormat.NONE:
        out[:] = ct.values.reshape(ct.rows, ct.cols)
    elif fmt is SparsityFormat.BITMAP:
        out.reshape(-1)[ct.bitmap.astype(bool)] = ct.values
    elif fmt is SparsityFormat.COO:
        out[ct.row_idx, ct.col_idx] = ct.values
    else:
        counts = np.diff(ct.pointers)
        major = np.repeat(np.arange(counts.size), counts)
        if ct.orientation == "col":
            out[ct.row_idx, major] = ct.values
        else:
            out[major, ct.col_idx] = ct.values
    return DenseTile.from_array(out, ct.mode)


# --- bit-level serialization ----------------------------------------------------

def _pack_field_bits(vals: np.ndarray, width: int) -> np.ndarray:
    """Fields LSB-first, two's complement truncated to ``width`` bits."""
    if width == 0 or vals.size == 0:
        return np.zeros(0, dtype=np.uint8)
    shifts = np.arange(width, dtype=np.int64)
    return ((vals[:, None] >> shifts) & 1).astype(np.uint8).reshape(-1)


def _unpack_field_bits(bits: np.ndarray, count: int, width: int, signed: bool) -> np.ndarray:
    if count == 0:
        return np.zeros(0, dtype=np.int64)
    if width == 0:
        return np.zeros(count, dtype=np.int64)
    b = bits[: count * width].reshape(count, width).astype(np.int64)
    vals = (b << np.arange(width, dtype=np.int64)).sum(axis=1)
    if signed:
        vals = np.where(vals >= 1 << (width - 1), vals - (1 << width), vals)
    return vals


def stream_bitstrings(ct: CompressedTile) -> dict:
    """Exact (unpadded) bit sequence of each stream."""
    w = ct.stream_widths()
    return {name: _pack_field_bits(getattr(ct, name), w[name]) for name in STREAM_ORDER}


def serialized_bit_length(ct: CompressedTile) -> int:
    return sum(int(b.size) for b in stream_bitstrings(ct).values())


def to_bytes(ct: CompressedTile) -> bytes:
    """Header, then each stream bit-packed LSB-first and padded to a byte boundary."""
    orient = 1 if ct.orientation == "col" else 0
    out = [_HEADER.pack(COMPRESSED_MAGIC, ct.format.value, ct.mode.bits, orient, 0,
                        ct.rows, ct.cols, ct.nnz)]
    for bits in stream_bitstrings(ct).values():
        out.append(np.packbits(bits, bitorder="little").tobytes())
    return b"".join(out)


def from_bytes(blob: bytes) -> CompressedTile:
    if len(blob) < _HEADER.size:
        raise FormatError("header", f"{len(blob)} bytes, need {_HEADER.size}")
    magic, fmt_id, bits, orient, _, rows, cols, nnz = _HEADER.unpack_from(blob)
    if magic != COMPRESSED_MAGIC:
        raise FormatError("header", "bad magic")
    try:
        fmt = SparsityFormat(fmt_id)
        mode = PrecisionMode(bits)
    except ValueError as exc:
        raise FormatError("header", str(exc)) from None
    orientation = "col" if orient else "row"
    lengths = expected_stream_lengths(fmt, rows, cols, nnz, orientation)
    probe = CompressedTile(format=fmt, mode=mode, rows=rows, cols=cols, nnz=nnz)
    widths = probe.stream_widths()
    pos = _HEADER.size
    streams = {}
    for name in STREAM_ORDER:
        nbits = lengths[name] * widths[name]
        nbytes = -(-nbits // 8)
        chunk = blob[pos: pos + nbytes]
        if len(chunk) < nbytes:
            raise FormatError(name, f"truncated: {len(chunk)} of {nbytes} bytes")
        pos += nbytes
        raw = np.unpackbits(np.frombuffer(chunk, dtype=np.uint8), bitorder="little")
        streams[name] = _ro(_unpack_field_bits(raw, lengths[name], widths[name],
                                               signed=(name == "values")))
    if pos != len(blob):
        raise FormatError("trailer", f"{len(blob) - pos} unexpected trailing bytes")
    return CompressedTile(format=fmt, mode=mode, rows=rows, cols=cols, nnz=nnz,
                          orientation=orientation, **streams)


def compress_optimal(tile: DenseTile, sr: Optional[float] = None) -> CompressedTile:
    """Encode with the selector's choice for the tile's (or the given) sparsity."""
    if sr is None:
        fmt = best_format(tile.rows, tile.cols, tile.nnz, tile.mode)
    else:
        fmt = select_format(sr, tile.mode, tile.rows, tile.cols)
    return encode(tile, fmt)
