import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flexsim.nerf import (
    HashGridConfig,
    PeConfig,
    RaySampleSet,
    approx_cos,
    approx_cos_fixed,
    approx_sin,
    approx_sin_fixed,
    from_q,
    hash_lookup,
    make_tables,
    positional_encode,
    quadrature_weights,
    read_points,
    render_quadrature,
    trilinear,
    write_access_stats_csv,
)

PRIMES = (1, 2654435761, 805459861)
unit = st.floats(0, 1, allow_nan=False)


def oracle_index(vertex, level, cfg):
    """Table index with Python ints; the low bits survive 64-bit wraparound."""
    x, y, z = (int(v) for v in vertex)
    h = (x * PRIMES[0]) ^ (y * PRIMES[1]) ^ (z * PRIMES[2])
    if level <= cfg.threshold_level:
        return h % cfg.table_size
    n = cfg.resolutions[level]
    p = cfg.subgrid_partition
    sx, sy, sz = (min(v * p // (n + 1), p - 1) for v in (x, y, z))
    size = cfg.table_size // p ** 3
    return (sx + p * sy + p * p * sz) * size + h % size


def oracle_corners(point, level, cfg):
    n = cfg.resolutions[level]
    base = [min(math.floor(c * n), n - 1) for c in point]
    frac = [c * n - b for c, b in zip(point, base)]
    corners = []
    for c in range(8):
        off = (c & 1, (c >> 1) & 1, (c >> 2) & 1)
        corners.append(tuple(b + o for b, o in zip(base, off)))
    return corners, frac


def test_exact_encoding_example():
    out = positional_encode(1.0, PeConfig(2))
    assert np.allclose(out, [0, -1, 0, 1], atol=1e-12)


def test_approx_sin_examples():
    assert approx_sin(1.0) == 1.0
    assert approx_sin(0.5) == 0.75
    assert abs(approx_sin(0.5) - math.sin(math.pi / 4)) == pytest.approx(0.0429, abs=1e-4)


@pytest.mark.parametrize("u", [0, 1, 2, 3])
def test_approx_exact_at_integers(u):
    assert approx_sin(u) == pytest.approx(math.sin(math.pi * u / 2), abs=1e-15)
    assert approx_cos(u) == pytest.approx(math.cos(math.pi * u / 2), abs=1e-15)


def test_approx_error_bound_dense_sampling():
    u = np.linspace(0, 4, 400_001)[:-1]
    assert np.max(np.abs(approx_sin(u) - np.sin(np.pi * u / 2))) <= 0.06
    assert np.max(np.abs(approx_cos(u) - np.cos(np.pi * u / 2))) <= 0.06


@given(st.floats(0, 4, exclude_max=True))
def test_approx_cos_sign_follows_cos(u):
    c = math.cos(math.pi * u / 2)
    if abs(c) > 1e-9:
        assert math.copysign(1, float(approx_cos(u))) == math.copysign(1, c) or approx_cos(u) == 0


@given(st.floats(0, 4, exclude_max=True))
def test_fixed_point_tracks_real_form(u):
    assert abs(from_q(approx_sin_fixed(u)) - approx_sin(u)) <= 2 ** -9
    assert abs(from_q(approx_cos_fixed(u)) - approx_cos(u)) <= 2 ** -9


@given(st.floats(-8, 8, allow_nan=False), st.integers(1, 6))
def test_approx_encoding_close_to_exact(v, n):
    exact = positional_encode(v, PeConfig(n))
    approx = positional_encode(v, PeConfig(n, approx=True))
    assert exact.shape == approx.shape == (2 * n,)
    assert np.max(np.abs(exact - approx)) <= 0.06


def test_encoding_shapes_and_errors():
    assert positional_encode(np.zeros((5, 3)), PeConfig(4)).shape == (5, 3, 8)
    with pytest.raises(ValueError):
        PeConfig(0)
    with pytest.raises(ValueError):
        positional_encode(float("nan"), PeConfig(1))


def test_default_grid():
    cfg = HashGridConfig()
    res = cfg.resolutions
    assert res[0] == 16 and res[-1] == 512 and len(res) == 16
    assert cfg.threshold_level == 1 and cfg.subgrid_table_size == 256


@pytest.mark.parametrize("bad", [dict(table_size=1000), dict(levels=0),
                                 dict(base_resolution=16, max_resolution=17, levels=8)])
def test_grid_validation(bad):
    with pytest.raises(ValueError):
        HashGridConfig(**bad)


def test_identical_points_dedup():
    cfg = HashGridConfig()
    _, stats = hash_lookup(np.full((8, 3), 0.3), cfg)
    s = stats[0]
    assert s.coalesced and s.naive_reads == 64 and s.dedup_reads <= 8


def test_distinct_corners_no_savings():
    cfg = HashGridConfig(levels=2, base_resolution=16, max_resolution=20, table_size=2 ** 20)
    pts = np.array([[0.03 + 0.125 * i, 0.5, 0.5] for i in range(8)])
    _, stats = hash_lookup(pts, cfg)
    idx = {oracle_index(v, 0, cfg) for p in pts for v in oracle_corners(p, 0, cfg)[0]}
    assert len(idx) == 64
    assert stats[0].dedup_reads == stats[0].naive_reads == 64


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_dedup_matches_set_size(seed):
    cfg = HashGridConfig()
    pts = np.random.default_rng(seed).random((64, 3))
    _, stats = hash_lookup(pts, cfg)
    for level in range(cfg.threshold_level + 1):
        idx = {oracle_index(v, level, cfg) for p in pts for v in oracle_corners(p, level, cfg)[0]}
        assert stats[level].dedup_reads == len(idx)
        assert stats[level].naive_reads == 512


@given(st.lists(st.tuples(unit, unit, unit), min_size=1, max_size=150))
def test_dedup_never_exceeds_naive(points):
    cfg = HashGridConfig(levels=4, max_resolution=128)
    _, stats = hash_lookup(np.array(points), cfg)
    for s in stats:
        assert s.dedup_reads <= s.naive_reads == 8 * len(points)
        if not s.coalesced:
            assert s.subgrid_total == s.naive_reads


def test_features_match_oracle():
    cfg = HashGridConfig(levels=6, max_resolution=256, table_size=2 ** 12)
    tables = make_tables(cfg)
    pts = np.random.default_rng(4).random((70, 3))
    feats, _ = hash_lookup(pts, cfg, tables)
    for i, p in enumerate(pts[:20]):
        for level in range(cfg.levels):
            corners, frac = oracle_corners(p, level, cfg)
            expect = np.zeros(cfg.features)
            for c, v in enumerate(corners):
                w = 1.0
                for axis in range(3):
                    bit = (c >> axis) & 1
                    w *= frac[axis] if bit else 1 - frac[axis]
                expect += w * tables[level][oracle_index(v, level, cfg)]
            got = feats[i, level * cfg.features:(level + 1) * cfg.features]
            assert np.allclose(got, expect, atol=1e-12)


@pytest.mark.parametrize("point", [[1.2, 0, 0], [-0.1, 0.5, 0.5], [0.5, float("nan"), 0]])
def test_out_of_cube_rejected(point):
    with pytest.raises(ValueError):
        hash_lookup(np.array([point]), HashGridConfig())


def test_trilinear_corners():
    f = np.arange(16, dtype=float).reshape(8, 2)
    assert np.array_equal(trilinear(f, [0, 0, 0]), f[0])
    assert np.array_equal(trilinear(f, [1, 1, 1]), f[7])
    assert np.array_equal(trilinear(f, [1, 0, 0]), f[1])


@given(st.tuples(unit, unit, unit), st.floats(-5, 5))
def test_trilinear_constant(w, value):
    assert np.allclose(trilinear(np.full((8, 3), value), w), value)


@given(st.tuples(unit, unit, unit), st.integers(0, 2), st.integers(0, 1000))
def test_trilinear_affine_in_each_weight(w, axis, seed):
    f = np.random.default_rng(seed).normal(size=(8, 2))

    def at(t):
        ww = list(w)
        ww[axis] = t
        return trilinear(f, ww)
    # f(t) = f(0) + t * (f(1) - f(0))
    assert np.allclose(at(w[axis]), at(0) + w[axis] * (at(1) - at(0)), atol=1e-12)


def test_trilinear_rejects_bad_input():
    with pytest.raises(ValueError):
        trilinear(np.zeros((7, 2)), [0, 0, 0])
    with pytest.raises(ValueError):
        trilinear(np.zeros((8, 2)), [0, 1.5, 0])


def test_quadrature_examples():
    one = RaySampleSet([math.log(2)], [[1, 1, 1]], [1.0])
    assert np.allclose(render_quadrature(one), 0.5, atol=1e-15)
    zero = RaySampleSet([0, 0, 0], np.ones((3, 3)), [0.1, 0.2, 0.3])
    assert np.array_equal(render_quadrature(zero), [0, 0, 0])


@given(st.floats(0, 50), st.lists(st.floats(1e-3, 2), min_size=1, max_size=64),
       st.tuples(unit, unit, unit))
def test_quadrature_constant_closed_form(sigma, deltas, color):
    n = len(deltas)
    s = RaySampleSet([sigma] * n, [color] * n, deltas)
    expect = np.array(color) * (1 - math.exp(-sigma * sum(deltas)))
    assert np.allclose(render_quadrature(s), expect, atol=1e-9, rtol=0)


@settings(max_examples=500)
@given(st.lists(st.tuples(st.floats(0, 1e3), st.floats(1e-4, 10)), min_size=1, max_size=50))
def test_weights_normalized(pairs):
    s = RaySampleSet([p[0] for p in pairs], np.ones((len(pairs), 3)), [p[1] for p in pairs])
    w = quadrature_weights(s)
    assert np.all(w >= 0)
    assert 0 <= math.fsum(w) <= 1


@pytest.mark.parametrize("bad", [dict(sigma=[-1]), dict(delta=[0.0]), dict(color=[[1, 1, 1], [1, 1, 1]])])
def test_sample_set_validation(bad):
    kw = dict(sigma=[1.0], color=[[1, 1, 1]], delta=[1.0])
    kw.update(bad)
    with pytest.raises(ValueError):
        RaySampleSet(**kw)


def test_points_file_and_stats_csv(tmp_path):
    (tmp_path / "p.txt").write_text("# header\n0.1 0.2 0.3\n\n0.4,0.5,0.6  # trailing\n")
    pts = read_points(tmp_path / "p.txt")
    assert pts.shape == (2, 3)
    _, stats = hash_lookup(pts, HashGridConfig(levels=3, max_resolution=64))
    write_access_stats_csv(stats, tmp_path / "s.csv", ["# flexsim encode-stats schema=1"])
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == "# flexsim encode-stats schema=1"
    rows = list(csv.DictReader(lines[1:]))
    assert [int(r["naive_reads"]) for r in rows] == [16, 16, 16]
    (tmp_path / "bad.txt").write_text("0.1 0.2\n")
    with pytest.raises(ValueError):
        read_points(tmp_path / "bad.txt")
