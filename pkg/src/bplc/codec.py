"""Per-plane block compression of bit-plane matrices.

Each plane of a superblock is compressed on its own so that a reader can
decompress any prefix of planes without touching the rest. A plane whose
compressed form is not smaller than the raw plane is kept raw; a stored
length equal to the raw plane length marks it.

Serialized superblock::

    value_count u32 | plane_count u8 | meta_len u32 | plane_len u32 * plane_count
    | meta bytes | plane payloads (MSB plane first)

All integers little-endian.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass

import lz4.block
import numpy as np
import zstandard

from .bitplane import BitPlaneMatrix, plane_bytes
from .errors import CodecError, IntegrityError
from .float_format import FloatFormat

DEFAULT_ZSTD_LEVEL = 3
SUPERBLOCK_SIZES = (8192, 16384, 32768, 65536)
DEFAULT_SUPERBLOCK = 32768

_SB_HEAD = struct.Struct("<IBI")


class CompressionAlgo(enum.IntEnum):
    NONE = 0
    LZ4 = 1
    ZSTD = 2

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        if isinstance(value, str):
            try:
                return cls[value.upper()]
            except KeyError:
                raise ValueError(f"unknown algorithm {value!r}; expected none, lz4 or zstd") from None
        return cls(value)


def _compressor(algo, level):
    # One zstd context per call site; contexts are not shared across threads.
    if algo == CompressionAlgo.NONE:
        return lambda data: data
    if algo == CompressionAlgo.LZ4:
        return lambda data: lz4.block.compress(data, store_size=False)
    return zstandard.ZstdCompressor(level=level, write_checksum=False, write_content_size=True).compress


def _decompressor(algo):
    if algo == CompressionAlgo.LZ4:
        return lambda data, raw_size: lz4.block.decompress(data, uncompressed_size=raw_size)
    dctx = zstandard.ZstdDecompressor()
    return lambda data, raw_size: dctx.decompress(data, max_output_size=raw_size)


def compress_segments(segments, algo, level=DEFAULT_ZSTD_LEVEL) -> list[bytes]:
    """Compress each segment independently with raw fallback."""
    algo = CompressionAlgo.parse(algo)
    compress = _compressor(algo, level)
    out = []
    for i, seg in enumerate(segments):
        seg = bytes(seg)
        try:
            packed = compress(seg)
        except Exception as exc:  # compressor bindings raise assorted types
            raise CodecError(f"compressing plane segment {i} failed: {exc}", plane=i) from exc
        out.append(packed if len(packed) < len(seg) else seg)
    return out


def decompress_segment(payload: bytes, algo, raw_size: int, index: int, _decode=None) -> bytes:
    """Undo ``compress_segments`` for one segment; stored length == raw size means raw."""
    algo = CompressionAlgo.parse(algo)
    if len(payload) == raw_size or algo == CompressionAlgo.NONE:
        if len(payload) != raw_size:
            raise IntegrityError(f"plane {index}: raw payload of {len(payload)} bytes, expected {raw_size}", plane=index)
        return bytes(payload)
    if len(payload) > raw_size:
        raise IntegrityError(f"plane {index}: stored size exceeds raw size", plane=index)
    try:
        data = (_decode or _decompressor(algo))(bytes(payload), raw_size)
    except Exception as exc:
        raise IntegrityError(f"plane {index}: payload does not decode ({exc})", plane=index) from exc
    if len(data) != raw_size:
        raise IntegrityError(f"plane {index}: decoded {len(data)} bytes, expected {raw_size}", plane=index)
    return data


@dataclass(frozen=True)
class CompressedSuperblock:
    format: FloatFormat
    value_count: int
    plane_count: int
    algo: CompressionAlgo
    payloads: tuple[bytes, ...]
    meta: bytes = b""
    level: int = DEFAULT_ZSTD_LEVEL

    @property
    def plane_lengths(self) -> tuple[int, ...]:
        return tuple(len(p) for p in self.payloads)

    @property
    def header_size(self) -> int:
        return _SB_HEAD.size + 4 * self.plane_count

    @property
    def raw_plane_size(self) -> int:
        return plane_bytes(self.value_count)

    @property
    def serialized_size(self) -> int:
        return self.header_size + len(self.meta) + sum(self.plane_lengths)

    def is_raw(self, row: int) -> bool:
        return len(self.payloads[row]) == self.raw_plane_size

    def bytes_touched(self, k: int | None = None) -> int:
        """Bytes a reader pulls to reconstruct the top ``k`` planes."""
        k = self.plane_count if k is None else k
        return self.header_size + len(self.meta) + sum(self.plane_lengths[:k])

    def to_bytes(self) -> bytes:
        head = _SB_HEAD.pack(self.value_count, self.plane_count, len(self.meta))
        lens = struct.pack(f"<{self.plane_count}I", *self.plane_lengths)
        return b"".join([head, lens, self.meta, *self.payloads])

    @classmethod
    def from_bytes(cls, data, fmt, algo, level=DEFAULT_ZSTD_LEVEL):
        view = memoryview(data)
        if len(view) < _SB_HEAD.size:
            raise IntegrityError("truncated superblock header")
        count, planes, meta_len = _SB_HEAD.unpack_from(view, 0)
        pos = _SB_HEAD.size
        lens = struct.unpack_from(f"<{planes}I", view, pos)
        pos += 4 * planes
        meta = bytes(view[pos : pos + meta_len])
        pos += meta_len
        payloads = []
        for i, n in enumerate(lens):
            if pos + n > len(view):
                raise IntegrityError(f"plane {i}: payload runs past end of superblock", plane=i)
            payloads.append(bytes(view[pos : pos + n]))
            pos += n
        return cls(fmt, count, planes, CompressionAlgo.parse(algo), tuple(payloads), meta, level)


def compress_superblock(matrix: BitPlaneMatrix, algo=CompressionAlgo.ZSTD, meta=None, level=DEFAULT_ZSTD_LEVEL):
    """Compress every plane of a full matrix independently.

    ``meta`` is an optional DeltaMeta (or raw bytes) stored uncompressed.
    """
    if matrix.present_planes != matrix.total_planes:
        raise ValueError("only full matrices can be compressed")
    algo = CompressionAlgo.parse(algo)
    meta_bytes = b"" if meta is None else (meta if isinstance(meta, bytes) else meta.to_bytes())
    payloads = compress_segments(matrix.plane_list(), algo, level)
    return CompressedSuperblock(matrix.format, matrix.count, matrix.total_planes, algo, tuple(payloads), meta_bytes, level)


def decompress_superblock(sb: CompressedSuperblock, k: int | None = None) -> BitPlaneMatrix:
    """Decode the top ``k`` planes (all when ``k`` is None)."""
    k = sb.plane_count if k is None else k
    if not 1 <= k <= sb.plane_count:
        raise ValueError(f"k={k} outside 1..{sb.plane_count}")
    raw = sb.raw_plane_size
    decode = None if sb.algo == CompressionAlgo.NONE else _decompressor(sb.algo)
    rows = np.empty((k, raw), dtype=np.uint8)
    for r in range(k):
        rows[r] = np.frombuffer(decompress_segment(sb.payloads[r], sb.algo, raw, r, decode), dtype=np.uint8)
    return BitPlaneMatrix(sb.format, sb.value_count, rows)


def compression_ratio(s_orig, s_comp) -> float:
    if s_comp <= 0:
        raise ValueError("compressed size must be positive")
    return s_orig / s_comp


def footprint_reduction(ratio) -> float:
    """Fraction of the original footprint saved at a given ratio."""
    if ratio <= 0:
        raise ValueError("ratio must be positive")
    return 1.0 - 1.0 / ratio
