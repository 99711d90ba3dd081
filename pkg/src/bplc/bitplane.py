"""Bit-plane disaggregation and aggregation of value blocks.

A block of m n-bit words becomes n planes of m bits. Planes are stored
most-significant first (sign plane at row 0, fraction LSB at row n-1), so a
reduced-precision read is always a prefix of the stored rows. Inside a plane,
value j lives in byte j // 8 at bit j % 8.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .float_format import FloatFormat, ValueBlock, get_format, word_dtype

__all__ = [
    "BitPlaneMatrix",
    "PRECISION_TABLE",
    "disaggregate",
    "aggregate",
    "truncate_planes",
    "resolve_precision",
    "plane_bytes",
    "mask_top_bits",
]

# Named reduced precisions expressed as retained plane counts. Mutable on purpose.
PRECISION_TABLE: dict[str, dict[str, int]] = {
    "bf16": {"BF16": 16, "FP12": 12, "FP8": 8, "FP6": 6, "FP4": 4},
    "fp16": {"FP16": 16, "FP12": 12, "FP8": 8, "FP6": 6, "FP4": 4},
    "fp8e4m3": {"FP8": 8, "FP6": 6, "FP4": 4},
    "fp8e5m2": {"FP8": 8, "FP6": 6, "FP4": 4},
    "int8": {"INT8": 8, "INT4": 4, "INT2": 2},
    "int4": {"INT4": 4, "INT2": 2},
}


def resolve_precision(precision, fmt) -> int:
    """Turn a plane count or a named precision (``"FP8"``) into a plane count."""
    fmt = get_format(fmt)
    n = fmt.total_bits
    if isinstance(precision, str):
        key = precision.upper()
        if key in ("FULL", fmt.name.upper()):
            return n
        table = PRECISION_TABLE.get(fmt.name, {})
        if key not in table:
            raise ValueError(f"no named precision {precision!r} for {fmt.name}")
        k = table[key]
    else:
        k = int(precision)
    if not 1 <= k <= n:
        raise ValueError(f"plane count {k} outside 1..{n} for {fmt.name}")
    return k


def plane_bytes(count: int) -> int:
    return (count + 7) // 8


@dataclass(frozen=True, eq=False)
class BitPlaneMatrix:
    """Top ``present_planes`` bit-planes of ``count`` words.

    ``planes`` is a read-only uint8 array of shape ``(present_planes,
    ceil(count / 8))``; row r holds bit ``n - 1 - r`` of every word.
    """

    format: FloatFormat
    count: int
    planes: np.ndarray

    def __post_init__(self):
        k = self.planes.shape[0]
        if self.planes.ndim != 2 or self.planes.shape[1] != plane_bytes(self.count):
            raise ValueError(f"plane array shape {self.planes.shape} does not fit {self.count} values")
        if not 0 <= k <= self.format.total_bits:
            raise ValueError(f"{k} planes exceed format width {self.format.total_bits}")
        self.planes.setflags(write=False)

    @property
    def present_planes(self) -> int:
        return self.planes.shape[0]

    @property
    def total_planes(self) -> int:
        return self.format.total_bits

    def plane(self, bit: int) -> bytes:
        """Packed plane for bit position ``bit`` (0 = LSB)."""
        row = self.format.total_bits - 1 - bit
        if not 0 <= row < self.present_planes:
            raise IndexError(f"plane {bit} not present")
        return self.planes[row].tobytes()

    def plane_list(self) -> list[bytes]:
        return [row.tobytes() for row in self.planes]

    @property
    def stored_bytes(self) -> int:
        return int(self.planes.size)

    def __eq__(self, other):
        if not isinstance(other, BitPlaneMatrix):
            return NotImplemented
        return (
            self.format == other.format
            and self.count == other.count
            and np.array_equal(self.planes, other.planes)
        )


def _transpose8(x):
    # 8x8 bit-matrix transpose of each uint64 (bit 8r+c <-> bit 8c+r).
    t = (x ^ (x >> np.uint64(7))) & np.uint64(0x00AA00AA00AA00AA)
    x = x ^ t ^ (t << np.uint64(7))
    t = (x ^ (x >> np.uint64(14))) & np.uint64(0x0000CCCC0000CCCC)
    x = x ^ t ^ (t << np.uint64(14))
    t = (x ^ (x >> np.uint64(28))) & np.uint64(0x00000000F0F0F0F0)
    x = x ^ t ^ (t << np.uint64(28))
    return x


def _words_to_planes_fast(words, n):
    # words: (m,) with m % 8 == 0, n in (8, 16, 32). Returns LSB-first planes (n, m/8).
    m = words.size
    nb = n // 8
    cols = words.astype(f"<u{nb}", copy=False).view(np.uint8).reshape(m, nb).T.copy()
    t = _transpose8(cols.view("<u8")).view(np.uint8).reshape(nb, m // 8, 8)
    return t.transpose(0, 2, 1).reshape(n, m // 8)


def _planes_to_words_fast(lsb_planes, n, m):
    nb = n // 8
    grp = lsb_planes.reshape(nb, 8, m // 8).transpose(0, 2, 1).copy()
    cols = _transpose8(grp.view("<u8").reshape(nb, m // 8)).view(np.uint8)
    return cols.T.copy().view(f"<u{nb}").ravel()


def disaggregate(block: ValueBlock) -> BitPlaneMatrix:
    """Split every word of ``block`` into its n bit-planes."""
    fmt = block.format
    n, m = fmt.total_bits, block.count
    if m % 8 == 0 and n in (8, 16, 32) and m:
        words = np.frombuffer(block.bits, dtype=f"<u{n // 8}")
        lsb = _words_to_planes_fast(words, n)
    else:
        stream = np.unpackbits(np.frombuffer(block.bits, dtype=np.uint8), bitorder="little")
        bits = stream[: m * n].reshape(m, n)
        lsb = np.packbits(bits.T, axis=1, bitorder="little") if m else np.zeros((n, 0), np.uint8)
    return BitPlaneMatrix(fmt, m, np.ascontiguousarray(lsb[::-1]))


def aggregate(matrix: BitPlaneMatrix) -> ValueBlock:
    """Rebuild words from the planes; absent low planes read as zero bits."""
    fmt = matrix.format
    n, m, k = fmt.total_bits, matrix.count, matrix.present_planes
    full = np.zeros((n, plane_bytes(m)), dtype=np.uint8)
    full[:k] = matrix.planes
    lsb = full[::-1]
    if m % 8 == 0 and n in (8, 16, 32) and m:
        words = _planes_to_words_fast(lsb, n, m)
        return ValueBlock(fmt, m, words.tobytes())
    if m == 0:
        return ValueBlock(fmt, 0, b"")
    bits = np.unpackbits(lsb, axis=1, bitorder="little")[:, :m]
    stream = np.ascontiguousarray(bits.T).ravel()
    return ValueBlock(fmt, m, np.packbits(stream, bitorder="little").tobytes())


def truncate_planes(matrix: BitPlaneMatrix, k: int) -> BitPlaneMatrix:
    """Keep only the top ``k`` planes."""
    if not 1 <= k <= matrix.present_planes:
        raise ValueError(f"k={k} outside 1..{matrix.present_planes}")
    if k == matrix.present_planes:
        return matrix
    return BitPlaneMatrix(matrix.format, matrix.count, matrix.planes[:k].copy())


def mask_top_bits(words, k, fmt) -> np.ndarray:
    """Zero all but the top ``k`` bits of each word (reference for truncation)."""
    fmt = get_format(fmt)
    n = fmt.total_bits
    mask = ((1 << n) - 1) ^ ((1 << (n - k)) - 1)
    return (np.asarray(words).astype(np.uint64) & np.uint64(mask)).astype(word_dtype(fmt))

