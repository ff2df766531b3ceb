from decimal import ROUND_HALF_UP, Decimal

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from flexsim.tensor import (
    DenseTile,
    PrecisionMode,
    fetch_geometry,
    fetch_words,
    load_tile,
    measure_sparsity,
    measure_tile,
    pack_word,
    prune_rows,
    read_tile_binary,
    read_tile_text,
    synth_sparse,
    unpack_word,
    write_tile_binary,
    write_tile_text,
)

MODES = list(PrecisionMode)


def tiles(max_side=12):
    @st.composite
    def build(draw):
        mode = draw(st.sampled_from(MODES))
        r = draw(st.integers(1, max_side))
        c = draw(st.integers(1, max_side))
        vals = draw(st.lists(st.integers(mode.lo, mode.hi), min_size=r * c, max_size=r * c))
        # sprinkle zeros so sparse cases show up often
        mask = draw(st.lists(st.booleans(), min_size=r * c, max_size=r * c))
        vals = [v if keep else 0 for v, keep in zip(vals, mask)]
        return DenseTile(r, c, mode, vals)
    return build()


@pytest.mark.parametrize("mode,bits,lanes,scale,limbs", [
    (PrecisionMode.INT16, 16, 1, 1, 4),
    (PrecisionMode.INT8, 8, 4, 2, 2),
    (PrecisionMode.INT4, 4, 16, 4, 1),
])
def test_mode_constants(mode, bits, lanes, scale, limbs):
    assert (mode.bits, mode.lanes, mode.scale, mode.limbs) == (bits, lanes, scale, limbs)
    assert mode.lo == -(2 ** (bits - 1)) and mode.hi == 2 ** (bits - 1) - 1


@pytest.mark.parametrize("text,mode", [("int8", PrecisionMode.INT8), ("Int4", PrecisionMode.INT4),
                                       (16, PrecisionMode.INT16), ("8", PrecisionMode.INT8)])
def test_mode_parse(text, mode):
    assert PrecisionMode.parse(text) is mode


def test_mode_parse_rejects_unknown():
    with pytest.raises(ValueError):
        PrecisionMode.parse("int32")


@pytest.mark.parametrize("mode,elems", [("int16", 1), ("int8", 4), ("int4", 16)])
def test_fetch_geometry_elements_per_port(mode, elems):
    g = fetch_geometry(mode)
    assert g.elems_per_fetch == elems
    assert g.bits_per_fetch <= g.fetch_port_bits == 64
    assert fetch_geometry(mode, units=8).array_elems_per_fetch == 8 * elems


def test_dense_tile_validation():
    with pytest.raises(ValueError):
        DenseTile(2, 2, "int4", [0, 1, 2, 8])
    with pytest.raises(ValueError):
        DenseTile(2, 2, "int4", [0, 1, 2])
    with pytest.raises(ValueError):
        DenseTile(0, 2, "int4", [])


def test_dense_tile_is_immutable():
    t = DenseTile(1, 2, "int8", [1, 2])
    with pytest.raises(AttributeError):
        t.rows = 3
    with pytest.raises(ValueError):
        t.array[0, 0] = 5


def test_synth_full_and_zero_sparsity():
    assert synth_sparse(2, 2, "int8", 100, seed=3).nnz == 0
    assert synth_sparse(2, 2, "int8", 0, seed=3).nnz == 4


def test_synth_zero_count_matches_rounding():
    t = synth_sparse(64, 64, "int16", 90, seed=7)
    expected = int((Decimal(4096) * Decimal("0.9")).quantize(Decimal(1), ROUND_HALF_UP))
    assert expected == 3686
    assert int(np.count_nonzero(t.array == 0)) == expected


@pytest.mark.parametrize("sr", [-1, 100.5])
def test_synth_rejects_bad_sr(sr):
    with pytest.raises(ValueError):
        synth_sparse(4, 4, "int8", sr, seed=0)


@given(st.integers(1, 20), st.integers(1, 20), st.sampled_from(MODES),
       st.integers(0, 100), st.integers(0, 2**31))
def test_synth_is_deterministic_and_in_range(r, c, mode, sr, seed):
    a = synth_sparse(r, c, mode, sr, seed)
    assert a == synth_sparse(r, c, mode, sr, seed)
    assert a.array.min() >= mode.lo and a.array.max() <= mode.hi


def test_measure_sparsity_popcounts():
    g = fetch_geometry("int8")
    words = [np.array([1, 2, 3, 0]), np.array([0, 0, 5, 0])]
    assert measure_sparsity(words, g).sr_percent == 50.0


def test_measure_sparsity_all_zero():
    g = fetch_geometry("int4")
    assert measure_sparsity([np.zeros(16)] * 3, g).sr_percent == 100.0


def test_measure_sparsity_empty_is_error():
    with pytest.raises(ValueError):
        measure_sparsity([], fetch_geometry("int8"))


def test_measure_sparsity_bad_word_length():
    with pytest.raises(ValueError):
        measure_sparsity([np.zeros(3)], fetch_geometry("int8"))


def test_measure_synth_tile():
    t = synth_sparse(64, 64, "int16", 90, seed=11)
    zeros = int(np.count_nonzero(t.array == 0))
    assert abs(measure_tile(t).sr_percent - 90.0) <= 100 / 4096
    assert measure_tile(t).sr_percent == pytest.approx(100 * zeros / 4096, abs=1e-12)


@given(tiles())
def test_measure_matches_zero_count_with_padding(t):
    g = fetch_geometry(t.mode)
    per = g.elems_per_fetch
    n = t.rows * t.cols
    padded = -(-n // per) * per
    zeros = int(np.count_nonzero(t.array == 0)) + padded - n
    assert measure_tile(t).sr_percent == pytest.approx(100 * zeros / padded, abs=1e-12)
    if n % per == 0:
        assert measure_tile(t).sr_percent == pytest.approx(100 * (n - t.nnz) / n, abs=1e-12)
    assert fetch_words(t, g).shape == (padded // per, per)


@given(st.sampled_from(MODES), st.data())
def test_pack_unpack_roundtrip(mode, data):
    elems = data.draw(st.lists(st.integers(mode.lo, mode.hi), min_size=1, max_size=mode.lanes))
    word = pack_word(elems, mode)
    assert 0 <= word < 1 << (mode.bits * len(elems))
    assert unpack_word(word, mode, len(elems)) == tuple(elems)


def test_pack_rejects_out_of_range():
    with pytest.raises(ValueError):
        pack_word([8], "int4")


def test_prune_rows_drops_trailing_rows():
    t = DenseTile.from_array(np.arange(8).reshape(4, 2), "int8")
    p = prune_rows(t, 0.5)
    assert p.shape == (2, 2)
    assert np.array_equal(p.array, t.array[:2])
    with pytest.raises(ValueError):
        prune_rows(t, 1.0)


@given(tiles())
def test_tile_files_roundtrip(tmp_path_factory, t):
    d = tmp_path_factory.mktemp("tiles")
    write_tile_text(t, d / "t.txt")
    write_tile_binary(t, d / "t.bin")
    assert read_tile_text(d / "t.txt") == t
    assert read_tile_binary(d / "t.bin") == t
    assert load_tile(d / "t.txt") == t
    assert load_tile(d / "t.bin") == t
