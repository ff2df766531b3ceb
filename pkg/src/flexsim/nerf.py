"""Reference kernels for neural-field encoding.

Positional encoding (exact and the piecewise-quadratic approximation),
multi-resolution hash-grid lookup with access statistics, trilinear
interpolation and volume-rendering quadrature.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

HASH_PRIMES = (1, 2654435761, 805459861)
PASS_WIDTH = 64
Q_FRAC = 12                      # Q4.12 fixed point
_Q_ONE = 1 << Q_FRAC


# ----------------------------------------------------------------------------
# positional encoding


@dataclass(frozen=True)
class PeConfig:
    n_freqs: int
    approx: bool = False

    def __post_init__(self):
        if self.n_freqs < 1:
            raise ValueError("encoding needs at least one frequency")

    @property
    def out_len(self) -> int:
        return 2 * self.n_freqs


def approx_sin(u):
    """sin(pi*u/2) ~ (-1)^floor(u/2) * mod(u, 2) * mod(2 - u, 2)."""
    u = np.asarray(u, dtype=np.float64)
    sign = 1.0 - 2.0 * (np.floor(u / 2) % 2)
    return sign * np.mod(u, 2) * np.mod(2 - u, 2)


def approx_cos(u):
    """cos(pi*u/2) ~ (-1)^floor((u+1)/2) * mod(u + 1, 2) * mod(1 - u, 2).

    This is the sine form shifted by one unit, so its sign term uses u + 1.
    """
    u = np.asarray(u, dtype=np.float64)
    sign = 1.0 - 2.0 * (np.floor((u + 1) / 2) % 2)
    return sign * np.mod(u + 1, 2) * np.mod(1 - u, 2)


def to_q(u) -> np.ndarray:
    """Round to Q4.12 after reducing the argument into [0, 4)."""
    q = np.rint(np.asarray(u, dtype=np.float64) * _Q_ONE).astype(np.int64)
    return q & (4 * _Q_ONE - 1)


def _q_quadratic(x: np.ndarray, y: np.ndarray, sign_bit: np.ndarray) -> np.ndarray:
    prod = (x * y + (_Q_ONE >> 1)) >> Q_FRAC
    return np.where(sign_bit == 1, -prod, prod)


def approx_sin_fixed(u) -> np.ndarray:
    """Fixed-point sine form: masks and shifts only; returns Q4.12 integers."""
    q = to_q(u)
    two = 2 * _Q_ONE
    a = q & (two - 1)                    # mod(u, 2)
    b = (two - q) & (two - 1)            # mod(2 - u, 2)
    return _q_quadratic(a, b, (q >> (Q_FRAC + 1)) & 1)


def approx_cos_fixed(u) -> np.ndarray:
    q = to_q(u)
    two = 2 * _Q_ONE
    a = (q + _Q_ONE) & (two - 1)
    b = (_Q_ONE - q) & (two - 1)
    return _q_quadratic(a, b, ((q + _Q_ONE) >> (Q_FRAC + 1)) & 1)


def from_q(q) -> np.ndarray:
    return np.asarray(q, dtype=np.float64) / _Q_ONE


def positional_encode(v, cfg: PeConfig) -> np.ndarray:
    """[sin(2^j pi v), cos(2^j pi v)] interleaved for j = 0..N-1.

    Works elementwise; the result has a trailing axis of length 2N.
    """
    v = np.asarray(v, dtype=np.float64)
    if not np.all(np.isfinite(v)):
        raise ValueError("positional encoding needs finite inputs")
    j = np.arange(cfg.n_freqs, dtype=np.float64)
    out = np.empty(v.shape + (cfg.out_len,), dtype=np.float64)
    if cfg.approx:
        u = np.mod(v[..., None] * 2.0 ** (j + 1), 4.0)
        out[..., 0::2] = approx_sin(u)
        out[..., 1::2] = approx_cos(u)
    else:
        arg = v[..., None] * (2.0 ** j) * math.pi
        out[..., 0::2] = np.sin(arg)
        out[..., 1::2] = np.cos(arg)
    return out


# ----------------------------------------------------------------------------
# hash grid


@dataclass(frozen=True)
class HashGridConfig:
    levels: int = 16
    base_resolution: int = 16
    max_resolution: int = 512
    table_size: int = 1 << 14
    features: int = 2
    coalesce_level: Optional[int] = None     # last coalesced level; None = automatic
    subgrid_partition: int = 4
    seed: int = 0

    def __post_init__(self):
        if self.levels < 1 or self.features < 1:
            raise ValueError("levels and features must be positive")
        t = self.table_size
        if t < 1 or t & (t - 1):
            raise ValueError(f"table size {t} is not a power of two")
        if self.subgrid_partition < 1 or t % self.subgrid_partition ** 3:
            raise ValueError("subgrid tables must divide the level table evenly")
        res = self.resolutions
        if any(b <= a for a, b in zip(res, res[1:])):
            raise ValueError(f"level resolutions are not strictly increasing: {res}")

    @property
    def growth(self) -> float:
        if self.levels == 1:
            return 1.0
        return math.exp((math.log(self.max_resolution) - math.log(self.base_resolution))
                        / (self.levels - 1))

    @property
    def resolutions(self) -> tuple:
        return tuple(int(math.floor(self.base_resolution * self.growth ** l + 1e-9))
                     for l in range(self.levels))

    @property
    def threshold_level(self) -> int:
        """Last level that coalesces; by default the last whose vertex count fits T."""
        if self.coalesce_level is not None:
            return self.coalesce_level
        fits = [l for l, n in enumerate(self.resolutions) if (n + 1) ** 3 <= self.table_size]
        return fits[-1] if fits else -1

    @property
    def subgrid_table_size(self) -> int:
        return self.table_size // self.subgrid_partition ** 3


def spatial_hash(vertices: np.ndarray, table_size: int) -> np.ndarray:
    """XOR of coordinate * prime, modulo the (power-of-two) table size."""
    v = np.asarray(vertices, dtype=np.uint64)
    h = np.zeros(v.shape[:-1], dtype=np.uint64)
    for axis, prime in enumerate(HASH_PRIMES):
        h ^= v[..., axis] * np.uint64(prime)
    return (h & np.uint64(table_size - 1)).astype(np.int64)


def corner_offsets() -> np.ndarray:
    """Corner c has offsets (c & 1, c >> 1 & 1, c >> 2 & 1) along (x, y, z)."""
    c = np.arange(8)
    return np.stack([c & 1, (c >> 1) & 1, (c >> 2) & 1], axis=1)


@dataclass
class AccessStats:
    level: int
    resolution: int
    coalesced: bool
    naive_reads: int = 0
    dedup_reads: int = 0
    subgrid_reads: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    @property
    def subgrid_total(self) -> int:
        return int(self.subgrid_reads.sum())


def make_tables(cfg: HashGridConfig) -> np.ndarray:
    rng = np.random.default_rng(cfg.seed)
    return rng.uniform(-1e-1, 1e-1, size=(cfg.levels, cfg.table_size, cfg.features))


def level_indices(points: np.ndarray, level: int, cfg: HashGridConfig):
    """Table indices (B, 8), fractional offsets (B, 3) and subgrid ids (B, 8)."""
    n = cfg.resolutions[level]
    scaled = points * n
    base = np.minimum(np.floor(scaled).astype(np.int64), n - 1)
    frac = scaled - base
    verts = base[:, None, :] + corner_offsets()[None, :, :]
    if level <= cfg.threshold_level:
        return spatial_hash(verts, cfg.table_size), frac, None
    p = cfg.subgrid_partition
    sub_axis = np.minimum(verts * p // (n + 1), p - 1)
    sub = sub_axis[..., 0] + p * sub_axis[..., 1] + p * p * sub_axis[..., 2]
    size = cfg.subgrid_table_size
    return sub * size + spatial_hash(verts, size), frac, sub


def trilinear(corner_features, fractional) -> np.ndarray:
    """Blend 8 corner vectors; corner c weights f or 1-f per axis by its offset bits."""
    feats = np.asarray(corner_features, dtype=np.float64)
    w = np.asarray(fractional, dtype=np.float64)
    if feats.shape[0] != 8:
        raise ValueError("trilinear needs 8 corner vectors")
    if w.shape != (3,) or np.any(w < 0) or np.any(w > 1):
        raise ValueError("fractional weights must be 3 values in [0, 1]")
    return _trilinear_batch(feats[None], w[None])[0]


def _trilinear_batch(feats: np.ndarray, frac: np.ndarray) -> np.ndarray:
    off = corner_offsets()                                   # (8, 3)
    w = np.where(off[None] == 1, frac[:, None, :], 1 - frac[:, None, :]).prod(axis=2)
    return np.einsum("bc,bcf->bf", w, feats)


def hash_lookup(coords, cfg: HashGridConfig, tables: Optional[np.ndarray] = None):
    """Encode points in passes of 64; returns ``(features (B, L*F), [AccessStats])``.

    Coalesced levels count each distinct table index once per pass; finer
    levels read the subgrid-local tables and report reads per subgrid.
    """
    pts = np.asarray(coords, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError("coordinates must have shape (batch, 3)")
    if np.any(~np.isfinite(pts)) or np.any(pts < 0) or np.any(pts > 1):
        raise ValueError("coordinates must lie inside the unit cube")
    tables = make_tables(cfg) if tables is None else tables
    stats = [AccessStats(l, r, l <= cfg.threshold_level,
                         subgrid_reads=np.zeros(0 if l <= cfg.threshold_level
                                                else cfg.subgrid_partition ** 3, dtype=np.int64))
             for l, r in enumerate(cfg.resolutions)]
    out = np.empty((pts.shape[0], cfg.levels * cfg.features), dtype=np.float64)
    for lo in range(0, pts.shape[0], PASS_WIDTH):
        batch = pts[lo: lo + PASS_WIDTH]
        for l in range(cfg.levels):
            idx, frac, sub = level_indices(batch, l, cfg)
            st = stats[l]
            st.naive_reads += idx.size
            if st.coalesced:
                st.dedup_reads += int(np.unique(idx).size)
            else:
                st.dedup_reads += idx.size
                st.subgrid_reads += np.bincount(sub.reshape(-1), minlength=st.subgrid_reads.size)
            feats = tables[l][idx]                            # (b, 8, F)
            out[lo: lo + batch.shape[0], l * cfg.features:(l + 1) * cfg.features] = \
                _trilinear_batch(feats, frac)
    return out, stats


def read_points(path) -> np.ndarray:
    """One ``x y z`` per line; blank lines and ``#`` comments are skipped."""
    rows = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.replace(",", " ").split()
        if len(parts) != 3:
            raise ValueError(f"{path}:{lineno}: expected three coordinates")
        rows.append([float(p) for p in parts])
    return np.array(rows, dtype=np.float64).reshape(-1, 3)


def write_access_stats_csv(stats: Sequence[AccessStats], path, header_lines=()) -> None:
    with open(path, "w", newline="") as fh:
        for h in header_lines:
            fh.write(h + "\n")
        w = csv.writer(fh)
        w.writerow(["level", "resolution", "naive_reads", "dedup_reads", "subgrid_reads",
                    "max_subgrid_reads"])
        for s in stats:
            w.writerow([s.level, s.resolution, s.naive_reads, s.dedup_reads, s.subgrid_total,
                        int(s.subgrid_reads.max()) if s.subgrid_reads.size else 0])


# ----------------------------------------------------------------------------
# volume rendering


@dataclass(frozen=True)
class RaySampleSet:
    sigma: np.ndarray        # (n,) densities >= 0
    color: np.ndarray        # (n, 3)
    delta: np.ndarray        # (n,) segment lengths > 0

    def __post_init__(self):
        s = np.asarray(self.sigma, dtype=np.float64).reshape(-1)
        c = np.asarray(self.color, dtype=np.float64).reshape(-1, 3)
        d = np.asarray(self.delta, dtype=np.float64).reshape(-1)
        if not (s.size == c.shape[0] == d.size):
            raise ValueError("sigma, color and delta lengths differ")
        if np.any(s < 0) or np.any(~np.isfinite(s)):
            raise ValueError("densities must be finite and non-negative")
        if np.any(d <= 0) or np.any(~np.isfinite(d)):
            raise ValueError("segment lengths must be positive")
        object.__setattr__(self, "sigma", s)
        object.__setattr__(self, "color", c)
        object.__setattr__(self, "delta", d)


def quadrature_weights(samples: RaySampleSet) -> np.ndarray:
    """T_i * (1 - exp(-sigma_i * delta_i)) with T_1 = 1.

    Written as T_i - T_{i+1} so the weights telescope to 1 - T_{n+1} and the
    sum cannot round above one.
    """
    tau = samples.sigma * samples.delta
    trans = np.exp(-np.concatenate(([0.0], np.cumsum(tau))))
    return trans[:-1] - trans[1:]


def render_quadrature(samples: RaySampleSet) -> np.ndarray:
    return quadrature_weights(samples) @ samples.color
