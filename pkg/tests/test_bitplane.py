import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bplc.bitplane import (
    PRECISION_TABLE,
    BitPlaneMatrix,
    aggregate,
    disaggregate,
    mask_top_bits,
    resolve_precision,
    truncate_planes,
)
from bplc.float_format import BUILTIN_FORMATS, ValueBlock, get_format, word_dtype

from conftest import random_words


def bits_of(plane, m):
    return list(np.unpackbits(np.frombuffer(plane, np.uint8), bitorder="little")[:m])


def test_zero_block():
    mat = disaggregate(ValueBlock.from_words([0, 0], "bf16"))
    assert mat.present_planes == 16
    for i in range(16):
        assert bits_of(mat.plane(i), 2) == [0, 0]


def test_fp16_sign_and_lsb_example():
    mat = disaggregate(ValueBlock.from_words([0x8000, 0x0001], "fp16"))
    assert bits_of(mat.plane(15), 2) == [1, 0]
    assert bits_of(mat.plane(0), 2) == [0, 1]
    for i in range(1, 15):
        assert bits_of(mat.plane(i), 2) == [0, 0]


def test_plane_storage_order_is_msb_first():
    mat = disaggregate(ValueBlock.from_words([0x8000], "fp16"))
    assert mat.planes[0, 0] == 1 and mat.planes[1:].sum() == 0


def test_aggregate_examples():
    block = ValueBlock.from_words([0xABCD], "fp16")
    mat = disaggregate(block)
    assert aggregate(mat) == block
    assert list(aggregate(truncate_planes(mat, 8)).words()) == [0xAB00]
    bf = disaggregate(ValueBlock.from_words([0x3DCD], "bf16"))
    assert list(aggregate(truncate_planes(bf, 12)).words()) == [0x3DC0]


def test_truncate_examples():
    block = ValueBlock.from_words([0x3F80] * 8, "bf16")
    mat = disaggregate(block)
    assert truncate_planes(mat, 16) is mat
    # top four bits of 0x3F80 are 0011
    assert set(aggregate(truncate_planes(mat, 4)).words()) == {0x3000}
    f16 = disaggregate(ValueBlock.from_words(np.arange(0, 65536, 257, dtype=np.uint16), "fp16"))
    assert not (aggregate(truncate_planes(f16, 8)).words() & 0xFF).any()


def test_truncate_rejects_bad_k():
    mat = disaggregate(ValueBlock.from_words([1, 2], "fp16"))
    for k in (0, 17):
        with pytest.raises(ValueError):
            truncate_planes(mat, k)
    with pytest.raises(ValueError):
        truncate_planes(truncate_planes(mat, 8), 9)


def _brute_planes(words, n):
    # plane i bit j = bit i of word j, by direct loops
    return {i: [(int(w) >> i) & 1 for w in words] for i in range(n)}


@pytest.mark.parametrize("name", BUILTIN_FORMATS)
@pytest.mark.parametrize("m", [1, 5, 8, 16, 63, 1024])
def test_disaggregate_matches_brute_force(name, m):
    fmt = get_format(name)
    w = random_words(np.random.default_rng(m), fmt, m)
    mat = disaggregate(ValueBlock.from_words(w, fmt))
    brute = _brute_planes(w, fmt.total_bits)
    for i in range(fmt.total_bits):
        assert bits_of(mat.plane(i), m) == brute[i]
        assert len(mat.plane(i)) == (m + 7) // 8


def test_fast_and_generic_paths_agree():
    # m % 8 == 0 takes the transpose path; m+1 does not
    rng = np.random.default_rng(9)
    w = rng.integers(0, 1 << 16, 257, dtype=np.uint64).astype(np.uint16)
    a = disaggregate(ValueBlock.from_words(w[:256], "bf16"))
    b = disaggregate(ValueBlock.from_words(w, "bf16"))
    assert np.array_equal(a.planes[:, :32], b.planes[:, :32])


@settings(max_examples=150, deadline=None)
@given(st.sampled_from(BUILTIN_FORMATS), st.integers(0, 300), st.integers(0, 2**32 - 1))
def test_exact_inverse(name, m, seed):
    fmt = get_format(name)
    block = ValueBlock.from_words(random_words(np.random.default_rng(seed), fmt, m), fmt)
    assert aggregate(disaggregate(block)) == block


@settings(max_examples=150, deadline=None)
@given(st.sampled_from(BUILTIN_FORMATS), st.integers(1, 200), st.integers(0, 2**32 - 1), st.data())
def test_truncation_matches_mask_oracle(name, m, seed, data):
    fmt = get_format(name)
    k = data.draw(st.integers(1, fmt.total_bits))
    w = random_words(np.random.default_rng(seed), fmt, m)
    got = aggregate(truncate_planes(disaggregate(ValueBlock.from_words(w, fmt)), k)).words()
    # mask built independently from shifts, not from mask_top_bits
    n = fmt.total_bits
    expect = [(int(x) >> (n - k)) << (n - k) for x in w]
    assert list(got) == expect
    assert np.array_equal(mask_top_bits(w, k, fmt), np.array(expect, dtype=word_dtype(fmt)))


@pytest.mark.parametrize("name", ["bf16", "fp16", "int8", "int4", "fp8e4m3"])
def test_byte_budget_proportional(name):
    fmt = get_format(name)
    mat = disaggregate(ValueBlock.from_words(np.zeros(4096, word_dtype(fmt)), fmt))
    for k in range(1, fmt.total_bits + 1):
        assert truncate_planes(mat, k).stored_bytes * fmt.total_bits == k * mat.stored_bytes


def test_subrange_processing_matches_whole():
    rng = np.random.default_rng(2)
    w = rng.integers(0, 1 << 16, 4096, dtype=np.uint64).astype(np.uint16)
    whole = disaggregate(ValueBlock.from_words(w, "fp16"))
    parts = [disaggregate(ValueBlock.from_words(w[i : i + 1024], "fp16")) for i in range(0, 4096, 1024)]
    assert np.array_equal(whole.planes, np.concatenate([p.planes for p in parts], axis=1))


def test_matrix_is_read_only():
    mat = disaggregate(ValueBlock.from_words([1, 2, 3], "fp16"))
    with pytest.raises(ValueError):
        mat.planes[0, 0] = 1


def test_missing_matrix_shape_rejected():
    with pytest.raises(ValueError):
        BitPlaneMatrix(get_format("fp16"), 9, np.zeros((16, 1), np.uint8))


def test_named_precisions():
    assert resolve_precision("FP12", "bf16") == 12
    assert resolve_precision("fp8", "bf16") == 8
    assert resolve_precision("FP6", "fp8e4m3") == 6
    assert resolve_precision("INT2", "int4") == 2
    assert resolve_precision("full", "int4") == 4
    assert resolve_precision(5, "fp16") == 5
    with pytest.raises(ValueError):
        resolve_precision("FP12", "fp8e4m3")
    with pytest.raises(ValueError):
        resolve_precision(17, "bf16")
    assert PRECISION_TABLE["bf16"]["FP4"] == 4
