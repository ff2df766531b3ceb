import csv
import itertools
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from flexsim.errors import SimulationFault
from flexsim.mac import (
    ACC_MAX,
    ACC_MIN,
    MacUnit,
    MacUnitConfig,
    brick_product,
    build_shifter_graph,
    check_accumulator,
    fused_multiply,
    fused_products,
    shifter_census,
    unit_accumulate,
    write_unit_trace_csv,
)
from flexsim.tensor import PrecisionMode, pack_word

MODES = list(PrecisionMode)


def lane_words(mode):
    return st.lists(st.integers(mode.lo, mode.hi), min_size=mode.lanes, max_size=mode.lanes)


def test_int16_example():
    assert fused_multiply([3], [-7], "int16") == (-21,)


def test_int4_all_lanes_example():
    assert fused_multiply([7] * 16, [-8] * 16, "int4") == (-56,) * 16


def test_int8_example():
    out = fused_multiply([100, 27, 0, -128], [-100, 27, 5, -128], "int8")
    assert out == (-10000, 729, 0, 16384)


def test_packed_word_input():
    a, b = [100, 27, 0, -128], [-100, 27, 5, -128]
    assert fused_multiply(pack_word(a, "int8"), pack_word(b, "int8"), "int8") == fused_multiply(a, b, "int8")


@pytest.mark.parametrize("mode,word", [("int8", [1, 2, 3]), ("int16", [1, 2]), ("int4", [0] * 15)])
def test_malformed_word_length(mode, word):
    with pytest.raises(ValueError):
        fused_multiply(word, word, mode)


def test_lane_value_out_of_range():
    with pytest.raises(ValueError):
        fused_multiply([128, 0, 0, 0], [1, 0, 0, 0], "int8")


def test_brick_matches_integer_product():
    for x, y in itertools.product(range(-8, 16), repeat=2):
        assert brick_product(x, y) == x * y


def test_int4_exhaustive():
    a, b = np.meshgrid(np.arange(-8, 8), np.arange(-8, 8))
    assert np.array_equal(fused_products(a.ravel(), b.ravel(), "int4"), (a * b).ravel())


@pytest.mark.parametrize("mode", ["int8", "int16"])
def test_vectorized_random_pairs(mode):
    m = PrecisionMode.parse(mode)
    rng = np.random.default_rng(5)
    a = rng.integers(m.lo, m.hi + 1, 20000)
    b = rng.integers(m.lo, m.hi + 1, 20000)
    assert np.array_equal(fused_products(a, b, m), a * b)


@pytest.mark.parametrize("mode", MODES)
def test_extremes(mode):
    for x, y in itertools.product([mode.lo, -1, 0, 1, mode.hi], repeat=2):
        assert fused_products(np.array([x]), np.array([y]), mode)[0] == x * y


@pytest.mark.parametrize("mode,partials", [("int16", 16), ("int8", 4), ("int4", 1)])
def test_partial_product_count(mode, partials):
    _, count = fused_products(np.array([3]), np.array([5]), mode, with_partials=True)
    m = PrecisionMode.parse(mode)
    assert count == partials
    assert count * m.lanes == 16     # every sub-multiplier busy in every mode


@given(st.sampled_from(MODES), st.data())
def test_fused_multiply_equals_reference(mode, data):
    a = data.draw(lane_words(mode))
    b = data.draw(lane_words(mode))
    assert fused_multiply(a, b, mode) == tuple(x * y for x, y in zip(a, b))


def test_unit_accumulate_examples():
    assert unit_accumulate([-21], "int16") == -21
    assert unit_accumulate([-10000, 729, 0, 16384], "int8") == 7113
    assert unit_accumulate([-56] * 16, "int4") == -896


def test_unit_accumulate_lane_count_checked():
    with pytest.raises(ValueError):
        unit_accumulate([1, 2], "int8")


def test_accumulator_overflow():
    assert check_accumulator(ACC_MAX) == ACC_MAX
    with pytest.raises(SimulationFault):
        check_accumulator(ACC_MAX + 1)
    with pytest.raises(SimulationFault):
        unit_accumulate([-1], "int16", acc=ACC_MIN)


def test_mac_unit_trace(tmp_path):
    unit = MacUnit("int8", unit_id=3, keep_trace=True)
    unit.step([1, 2, 3, 4], [1, 1, 1, 1])
    unit.step([-1, 0, 0, 0], [5, 0, 0, 0])
    assert unit.acc == 5 and unit.cycles == 2
    write_unit_trace_csv(unit.trace, tmp_path / "u.csv")
    rows = list(csv.reader(open(tmp_path / "u.csv")))
    assert rows[0] == ["cycle", "unit_id", "lane_products", "accumulator"]
    assert rows[2] == ["1", "3", "-5 0 0 0", "5"]


@pytest.mark.parametrize("mode", MODES)
def test_unit_config_lanes(mode):
    assert MacUnitConfig(mode).lanes == mode.lanes


def test_shifter_census_examples():
    assert shifter_census(16, 16, optimized=False).array_total == 6144
    assert shifter_census(16, 16, optimized=True).array_total == 4096
    assert shifter_census(1, 1, optimized=True).array_total == 16


@given(st.integers(1, 128), st.integers(1, 128))
def test_shifter_census_ratio(r, c):
    opt = shifter_census(r, c, True).array_total
    unopt = shifter_census(r, c, False).array_total
    assert Fraction(opt, unopt) == Fraction(2, 3)


@pytest.mark.parametrize("optimized", [False, True])
@given(mode=st.sampled_from(MODES), data=st.data())
def test_shifter_graph_evaluates_products(optimized, mode, data):
    a = data.draw(lane_words(mode))
    b = data.draw(lane_words(mode))
    assert build_shifter_graph(optimized).evaluate(a, b, mode) == fused_multiply(a, b, mode)
