"""Fixed-width word layouts and bit-field access.

Every transform in the package treats words as opaque n-bit patterns. The
numeric helpers here (``decode_value``, ``encode_nearest``) exist for
diagnostics and for synthesising test tensors; nothing on the codec path
depends on them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import FormatError, UnsupportedFormatError

__all__ = [
    "FloatFormat",
    "ValueBlock",
    "FORMATS",
    "get_format",
    "register_format",
    "split_fields",
    "join_fields",
    "decode_value",
    "decode_array",
    "encode_nearest",
    "encode_array",
    "word_dtype",
    "packed_size",
    "pack_words",
    "unpack_words",
]


@dataclass(frozen=True)
class FloatFormat:
    name: str
    exp_bits: int
    frac_bits: int
    sign_bits: int = 1
    bias: int = 0

    def __post_init__(self):
        if self.sign_bits not in (0, 1):
            raise FormatError(f"sign_bits must be 0 or 1, got {self.sign_bits}")
        if self.exp_bits < 0 or self.frac_bits < 0:
            raise FormatError("field widths must be non-negative")
        if not 1 <= self.total_bits <= 32:
            raise FormatError(f"total width {self.total_bits} outside 1..32")

    @property
    def total_bits(self) -> int:
        return self.sign_bits + self.exp_bits + self.frac_bits

    @property
    def is_float(self) -> bool:
        return self.exp_bits >= 1

    @property
    def exp_mask(self) -> int:
        return (1 << self.exp_bits) - 1

    @property
    def frac_mask(self) -> int:
        return (1 << self.frac_bits) - 1

    @property
    def word_mask(self) -> int:
        return (1 << self.total_bits) - 1

    def require_exponent(self):
        if self.exp_bits == 0:
            raise UnsupportedFormatError(f"format {self.name!r} has no exponent field")


FORMATS: dict[str, FloatFormat] = {}


def register_format(name, exp_bits, frac_bits, bias=None, sign_bits=None, *, replace=False):
    """Add a custom layout to the registry and return it.

    ``bias`` defaults to the IEEE convention ``2**(E-1) - 1``; ``sign_bits``
    defaults to 1 for formats with an exponent and 0 otherwise.
    """
    if exp_bits > 8 or frac_bits > 23:
        raise FormatError("custom formats are limited to E <= 8, F <= 23")
    if sign_bits is None:
        sign_bits = 1 if exp_bits else 0
    if bias is None:
        bias = (1 << (exp_bits - 1)) - 1 if exp_bits else 0
    fmt = FloatFormat(name, exp_bits, frac_bits, sign_bits, bias)
    if name in FORMATS and FORMATS[name] != fmt and not replace:
        raise FormatError(f"format {name!r} already registered with a different layout")
    FORMATS[name] = fmt
    return fmt


for _name, _e, _f, _s, _b in [
    ("bf16", 8, 7, 1, 127),
    ("fp16", 5, 10, 1, 15),
    ("fp8e4m3", 4, 3, 1, 7),
    ("fp8e5m2", 5, 2, 1, 15),
    ("int8", 0, 8, 0, 0),
    ("int4", 0, 4, 0, 0),
]:
    FORMATS[_name] = FloatFormat(_name, _e, _f, _s, _b)

BUILTIN_FORMATS = tuple(FORMATS)


def get_format(fmt) -> FloatFormat:
    if isinstance(fmt, FloatFormat):
        return fmt
    try:
        return FORMATS[fmt]
    except KeyError:
        raise FormatError(f"unknown format {fmt!r}; known: {sorted(FORMATS)}") from None


# ---------------------------------------------------------------------------
# Scalar bit-field access


def _check_word(word, fmt):
    word = int(word)
    if word < 0 or word > fmt.word_mask:
        raise FormatError(f"word {word:#x} does not fit in {fmt.total_bits} bits ({fmt.name})")
    return word


def split_fields(word, fmt):
    """Return ``(sign, exponent, fraction)`` raw fields of ``word``."""
    fmt = get_format(fmt)
    word = _check_word(word, fmt)
    frac = word & fmt.frac_mask
    exp = (word >> fmt.frac_bits) & fmt.exp_mask
    sign = (word >> (fmt.frac_bits + fmt.exp_bits)) if fmt.sign_bits else 0
    return sign, exp, frac


def join_fields(sign, exponent, fraction, fmt):
    fmt = get_format(fmt)
    if sign >> fmt.sign_bits or exponent >> fmt.exp_bits or fraction >> fmt.frac_bits:
        raise FormatError("field value exceeds its width")
    return (sign << (fmt.exp_bits + fmt.frac_bits)) | (exponent << fmt.frac_bits) | fraction


def decode_value(word, fmt) -> float:
    """Numeric value of ``word`` under IEEE-like semantics.

    Exponent field 0 is subnormal, all-ones is Inf (fraction 0) or NaN.
    """
    fmt = get_format(fmt)
    fmt.require_exponent()
    sign, exp, frac = split_fields(word, fmt)
    s = -1.0 if sign else 1.0
    if exp == fmt.exp_mask:
        return s * math.inf if frac == 0 else math.nan
    if exp == 0:
        return s * math.ldexp(frac, 1 - fmt.bias - fmt.frac_bits)
    return s * math.ldexp(frac + (1 << fmt.frac_bits), exp - fmt.bias - fmt.frac_bits)


def decode_array(words, fmt) -> np.ndarray:
    """Vectorised ``decode_value`` returning float64."""
    fmt = get_format(fmt)
    fmt.require_exponent()
    w = np.asarray(words).astype(np.int64)
    frac = (w & fmt.frac_mask).astype(np.float64)
    exp = (w >> fmt.frac_bits) & fmt.exp_mask
    neg = ((w >> (fmt.exp_bits + fmt.frac_bits)) & 1).astype(bool) if fmt.sign_bits else np.zeros(w.shape, bool)
    normal = exp > 0
    mant = np.where(normal, frac + float(1 << fmt.frac_bits), frac)
    e = np.where(normal, exp, 1) - fmt.bias - fmt.frac_bits
    with np.errstate(over="ignore"):
        out = np.ldexp(mant, e.astype(np.int32))
    special = exp == fmt.exp_mask
    out = np.where(special & (frac == 0), np.inf, out)
    out = np.where(special & (frac != 0), np.nan, out)
    return np.where(neg, -out, out)


def encode_array(values, fmt) -> np.ndarray:
    """Round float64 values to the nearest representable word (ties to even).

    Magnitudes past the largest finite value saturate to the Inf pattern.
    Returns words in ``word_dtype(fmt)``.
    """
    fmt = get_format(fmt)
    fmt.require_exponent()
    v = np.asarray(values, dtype=np.float64)
    E, F = fmt.exp_bits, fmt.frac_bits
    inf_mag = fmt.exp_mask << F
    a = np.abs(v)
    finite = np.isfinite(a)
    a_safe = np.where(finite, a, 0.0)
    _, ex = np.frexp(a_safe)
    unbiased = ex.astype(np.int64) - 1
    biased = unbiased + fmt.bias
    normal = biased >= 1
    # Scale so that one unit in the last place maps to 1.0; both branches are exact.
    shift = np.where(normal, F - unbiased, F - 1 + fmt.bias)
    q = np.rint(np.ldexp(a_safe, shift.astype(np.int32)))
    mag = np.where(normal, (biased << F) + q.astype(np.int64) - (1 << F), q.astype(np.int64))
    mag = np.where(a_safe == 0, 0, mag)
    mag = np.minimum(mag, inf_mag)
    mag = np.where(np.isinf(a), inf_mag, mag)
    nan_mag = inf_mag | (1 << (F - 1)) if F else inf_mag
    mag = np.where(np.isnan(a), nan_mag, mag)
    sign = np.signbit(v).astype(np.int64) if fmt.sign_bits else 0
    words = (sign << (E + F)) | mag
    return words.astype(word_dtype(fmt))


def encode_nearest(value, fmt) -> int:
    return int(encode_array(np.array([value], dtype=np.float64), fmt)[0])


# ---------------------------------------------------------------------------
# Packed storage


def word_dtype(fmt):
    n = get_format(fmt).total_bits
    if n <= 8:
        return np.dtype(np.uint8)
    if n <= 16:
        return np.dtype(np.uint16)
    return np.dtype(np.uint32)


def packed_size(count, fmt) -> int:
    """Bytes needed for ``count`` words laid end to end."""
    return (count * get_format(fmt).total_bits + 7) // 8


def pack_words(words, fmt) -> bytes:
    """Lay words end to end as a little-endian bit stream.

    Word ``j`` occupies stream bits ``[j*n, (j+1)*n)``; for 4-bit words this
    puts the first word in the low nibble.
    """
    fmt = get_format(fmt)
    n = fmt.total_bits
    w = np.asarray(words)
    if w.size and int(w.max()) > fmt.word_mask:
        raise FormatError(f"word exceeds {n} bits ({fmt.name})")
    if n in (8, 16, 32):
        return w.astype(f"<u{n // 8}", copy=False).tobytes()
    if n == 4:
        w = w.astype(np.uint8)
        if w.size % 2:
            w = np.append(w, np.uint8(0))
        return (w[0::2] | (w[1::2] << 4)).astype(np.uint8).tobytes()
    shifts = np.arange(n, dtype=np.uint32)
    bits = ((w.astype(np.uint32)[:, None] >> shifts) & 1).astype(np.uint8)
    return np.packbits(bits.ravel(), bitorder="little").tobytes()


def unpack_words(data, count, fmt) -> np.ndarray:
    fmt = get_format(fmt)
    n = fmt.total_bits
    need = packed_size(count, fmt)
    if len(data) < need:
        raise FormatError(f"need {need} bytes for {count} {fmt.name} words, got {len(data)}")
    buf = np.frombuffer(data, dtype=np.uint8, count=need)
    dt = word_dtype(fmt)
    if n in (8, 16, 32):
        return buf.view(f"<u{n // 8}").astype(dt)
    if n == 4:
        out = np.empty(2 * need, dtype=np.uint8)
        out[0::2] = buf & 0x0F
        out[1::2] = buf >> 4
        return out[:count].copy()
    bits = np.unpackbits(buf, bitorder="little")[: count * n].reshape(count, n)
    weights = (np.uint32(1) << np.arange(n, dtype=np.uint32))
    return (bits.astype(np.uint32) * weights).sum(axis=1, dtype=np.uint64).astype(dt)


@dataclass(frozen=True)
class ValueBlock:
    """``count`` words of ``format`` packed as a little-endian bit stream."""

    format: FloatFormat
    count: int
    bits: bytes

    def __post_init__(self):
        if len(self.bits) != packed_size(self.count, self.format):
            raise FormatError(
                f"{self.count} {self.format.name} words need "
                f"{packed_size(self.count, self.format)} bytes, got {len(self.bits)}"
            )

    @classmethod
    def from_words(cls, words, fmt):
        fmt = get_format(fmt)
        w = np.asarray(words).ravel()
        return cls(fmt, int(w.size), pack_words(w, fmt))

    def words(self) -> np.ndarray:
        return unpack_words(self.bits, self.count, self.format)

    @property
    def nbytes(self) -> int:
        return len(self.bits)
