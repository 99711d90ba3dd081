import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bplc.errors import FormatError, UnsupportedFormatError
from bplc.float_format import (
    BUILTIN_FORMATS,
    FORMATS,
    FloatFormat,
    ValueBlock,
    decode_array,
    decode_value,
    encode_array,
    encode_nearest,
    get_format,
    join_fields,
    pack_words,
    register_format,
    split_fields,
    unpack_words,
)

ml_dtypes = pytest.importorskip("ml_dtypes")


def test_builtin_registry_is_exact():
    expected = {
        "bf16": (1, 8, 7, 127),
        "fp16": (1, 5, 10, 15),
        "fp8e4m3": (1, 4, 3, 7),
        "fp8e5m2": (1, 5, 2, 15),
        "int8": (0, 0, 8, 0),
        "int4": (0, 0, 4, 0),
    }
    assert set(BUILTIN_FORMATS) == set(expected)
    for name, (s, e, f, b) in expected.items():
        fmt = FORMATS[name]
        assert (fmt.sign_bits, fmt.exp_bits, fmt.frac_bits, fmt.bias) == (s, e, f, b)
        assert fmt.total_bits == s + e + f
        assert fmt.total_bits in (4, 8, 12, 16, 32)


def test_split_fields_examples():
    assert split_fields(0x3F80, "bf16") == (0, 0x7F, 0x00)
    assert split_fields(0x0000, "bf16") == (0, 0, 0)
    assert split_fields(0xC500, "fp16") == (1, 0x11, 0x100)


def test_fp16_example_against_ieee_half():
    ref = float(np.array([0xC500], dtype=np.uint16).view(np.float16)[0])
    assert ref == -5.0
    assert decode_value(0xC500, "fp16") == ref


def test_split_rejects_wide_word():
    with pytest.raises(FormatError):
        split_fields(0x1_0000, "bf16")
    with pytest.raises(FormatError):
        split_fields(-1, "fp16")


@pytest.mark.parametrize("name", [n for n in BUILTIN_FORMATS])
def test_split_join_exhaustive(name):
    fmt = get_format(name)
    for w in range(1 << fmt.total_bits):
        assert join_fields(*split_fields(w, fmt), fmt) == w


def test_decode_examples():
    assert decode_value(0x3F80, "bf16") == 1.0
    assert decode_value(0x7C00, "fp16") == math.inf
    assert decode_value(0x38, "fp8e4m3") == 1.0


def _same(a, b):
    with np.errstate(invalid="ignore"):
        a, b = np.asarray(a, np.float64), np.asarray(b, np.float64)
    return np.array_equal(np.isnan(a), np.isnan(b)) and np.array_equal(a[~np.isnan(a)], b[~np.isnan(b)])


def test_decode_matches_reference_types_exhaustively():
    fp16 = np.arange(1 << 16, dtype=np.uint16)
    assert _same(decode_array(fp16, "fp16"), fp16.view(np.float16))
    assert _same(decode_array(fp16, "bf16"), fp16.view(ml_dtypes.bfloat16))
    e5 = np.arange(256, dtype=np.uint8)
    assert _same(decode_array(e5, "fp8e5m2"), e5.view(ml_dtypes.float8_e5m2))
    # OCP E4M3 reuses the all-ones exponent for normals; compare the shared range only
    e4 = np.array([w for w in range(256) if (w >> 3) & 0xF != 0xF], dtype=np.uint8)
    assert _same(decode_array(e4, "fp8e4m3"), e4.view(ml_dtypes.float8_e4m3fn))
    assert decode_value(0x38, "fp8e4m3") == float(np.array([0x38], np.uint8).view(ml_dtypes.float8_e4m3fn)[0])


def test_decode_scalar_and_array_agree():
    w = np.arange(1 << 16, dtype=np.uint16)[::97]
    assert _same([decode_value(int(x), "bf16") for x in w], decode_array(w, "bf16"))


def test_subnormal_decoding():
    # smallest fp16 subnormal is 2**-24
    assert decode_value(0x0001, "fp16") == 2.0**-24
    assert decode_value(0x8001, "bf16") == -(2.0**-133)


def test_integer_formats_reject_numeric_ops():
    with pytest.raises(UnsupportedFormatError):
        decode_value(3, "int8")
    with pytest.raises(UnsupportedFormatError):
        encode_nearest(1.0, "int4")


def _bf16_rne_from_fp32(x):
    # independent path: round the FP32 pattern at bit 16, ties to even
    u = int(np.array([x], dtype=np.float32).view(np.uint32)[0])
    upper, lower = u >> 16, u & 0xFFFF
    if lower > 0x8000 or (lower == 0x8000 and upper & 1):
        upper += 1
    return upper


def test_encode_examples():
    assert encode_nearest(1.0, "bf16") == 0x3F80
    assert encode_nearest(0.0, "fp16") == 0x0000
    assert _bf16_rne_from_fp32(0.1) == 0x3DCD
    assert encode_nearest(0.1, "bf16") == 0x3DCD


def test_encode_specials_and_saturation():
    assert encode_nearest(math.inf, "fp16") == 0x7C00
    assert encode_nearest(-math.inf, "bf16") == 0xFF80
    assert encode_nearest(1e6, "fp16") == 0x7C00
    assert encode_nearest(-1e6, "fp8e4m3") == 0xF8
    nan = encode_nearest(math.nan, "fp16")
    assert (nan >> 10) & 0x1F == 0x1F and nan & 0x3FF
    assert encode_nearest(-0.0, "fp16") == 0x8000


def test_encode_matches_numpy_half_on_random_doubles():
    rng = np.random.default_rng(5)
    x = np.concatenate([rng.standard_normal(20000) * 10.0 ** rng.integers(-9, 6, 20000), [65504.0, 65520.0, 6e-8]])
    with np.errstate(over="ignore"):
        ref = x.astype(np.float16).view(np.uint16)
    assert np.array_equal(encode_array(x, "fp16"), ref)


def test_encode_matches_reference_bf16_from_float32():
    rng = np.random.default_rng(6)
    x = (rng.standard_normal(20000) * 10.0 ** rng.integers(-30, 30, 20000)).astype(np.float32)
    ref = x.astype(ml_dtypes.bfloat16).view(np.uint16)
    assert np.array_equal(encode_array(x.astype(np.float64), "bf16"), ref)


def _ulp_at(value, fmt):
    fmt = get_format(fmt)
    _, e = math.frexp(abs(value)) if value else (0, 0)
    unbiased = max(e - 1, 1 - fmt.bias)
    return 2.0 ** (unbiased - fmt.frac_bits)


@settings(max_examples=300, deadline=None)
@given(
    st.sampled_from(["bf16", "fp16", "fp8e4m3", "fp8e5m2"]),
    st.floats(min_value=-1.0, max_value=1.0, allow_nan=False),
    st.integers(min_value=-6, max_value=6),
)
def test_encode_within_half_ulp(name, mantissa, scale):
    x = mantissa * 2.0**scale
    fmt = get_format(name)
    w = encode_nearest(x, fmt)
    got = decode_value(w, fmt)
    assert abs(got - x) <= _ulp_at(x, fmt) / 2


def test_register_custom_format():
    fmt = register_format("fp12e5m6", 5, 6)
    assert fmt.total_bits == 12 and fmt.bias == 15
    assert get_format("fp12e5m6") is fmt
    with pytest.raises(FormatError):
        register_format("too_wide", 9, 7)
    with pytest.raises(FormatError):
        register_format("fp12e5m6", 4, 7)


def test_unknown_format():
    with pytest.raises(FormatError):
        get_format("fp7")


def test_nibble_packing_low_first():
    assert pack_words([0x1, 0x2, 0x3], "int4") == bytes([0x21, 0x03])
    assert list(unpack_words(bytes([0x21, 0x03]), 3, "int4")) == [1, 2, 3]


def test_sixteen_bit_words_little_endian():
    assert pack_words([0xABCD], "fp16") == b"\xcd\xab"


@pytest.mark.parametrize("width", [5, 12, 20])
def test_odd_width_bitstream_roundtrip(width):
    fmt = FloatFormat(f"w{width}", 3, width - 4, 1, 3)
    rng = np.random.default_rng(width)
    w = rng.integers(0, 1 << width, 101)
    data = pack_words(w, fmt)
    assert len(data) == (101 * width + 7) // 8
    assert np.array_equal(unpack_words(data, 101, fmt), w)


def test_value_block_size_invariant():
    with pytest.raises(FormatError):
        ValueBlock(get_format("bf16"), 3, b"\x00" * 5)
    b = ValueBlock.from_words([1, 2, 3], "int4")
    assert b.nbytes == 2
