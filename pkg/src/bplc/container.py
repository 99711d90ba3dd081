"""On-disk container for compressed tensors, plus raw-tensor manifests.

File layout (all integers little-endian)::

    header     magic "BPLC" | version u16 | flags u16 | algo u8 | zstd_level i8
               | superblock_m u32 | tensor_count u32
    directory  per tensor: name_len u16 | name utf-8 | dtype_id u8
               [dtype_id 255: exp_bits u8 | frac_bits u8 | bias i16]
               | layout u8 | element_count u64
               [layout kv: tokens_per_group u16 | channels u32]
               | superblock_count u32 | first_offset u64
    records    superblocks of each tensor back to back, see ``codec``

Layouts: 0 bit-plane (weights path), 1 kv (grouping, exponent delta,
bit-planes; one superblock per token group), 2 raw (words kept
byte-interleaved and cut into ``plane_count`` equal segments, used as the
byte-layout baseline).
"""

from __future__ import annotations

import enum
import io
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .bitplane import aggregate, disaggregate, mask_top_bits, plane_bytes
from .codec import (
    DEFAULT_SUPERBLOCK,
    DEFAULT_ZSTD_LEVEL,
    SUPERBLOCK_SIZES,
    CompressedSuperblock,
    CompressionAlgo,
    compress_segments,
    compress_superblock,
    decompress_segment,
    decompress_superblock,
)
from .errors import ContainerError, FormatError, IntegrityError
from .float_format import FORMATS, FloatFormat, ValueBlock, get_format, packed_size, unpack_words
from .kv_transform import DEFAULT_GROUP_TOKENS, DeltaMeta, TokenGroup, decode_group, encode_group, split_tokens

MAGIC = b"BPLC"
VERSION = 1
MANIFEST_SCHEMA_VERSION = 1

_HEADER = struct.Struct("<4sHHBbII")
_SB_FIXED = struct.Struct("<IBI")

DTYPE_IDS = {"bf16": 1, "fp16": 2, "fp8e4m3": 3, "fp8e5m2": 4, "int8": 5, "int4": 6}
CUSTOM_DTYPE_ID = 255


class Layout(enum.IntEnum):
    BITPLANE = 0
    KV = 1
    RAW = 2

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        if isinstance(value, str):
            key = value.lower()
            aliases = {"weights": cls.BITPLANE, "bitplane": cls.BITPLANE, "kv": cls.KV, "raw": cls.RAW}
            if key not in aliases:
                raise ValueError(f"unknown layout {value!r}")
            return aliases[key]
        return cls(value)


# ---------------------------------------------------------------------------
# Manifest


@dataclass(frozen=True)
class ManifestEntry:
    name: str
    dtype: str
    shape: tuple[int, ...]
    path: str
    layout: str = "weights"
    tokens_per_group: int | None = None
    channels: int | None = None

    @property
    def element_count(self) -> int:
        return int(np.prod(self.shape, dtype=np.int64)) if self.shape else 1

    def to_dict(self):
        d = {"name": self.name, "dtype": self.dtype, "shape": list(self.shape), "path": self.path, "layout": self.layout}
        if self.layout == "kv":
            d["tokens_per_group"] = self.tokens_per_group
            d["channels"] = self.channels
        return d

    @classmethod
    def from_dict(cls, d):
        try:
            return cls(
                name=d["name"],
                dtype=d["dtype"],
                shape=tuple(int(x) for x in d["shape"]),
                path=d["path"],
                layout=d.get("layout", "weights"),
                tokens_per_group=d.get("tokens_per_group"),
                channels=d.get("channels"),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ContainerError(f"bad manifest entry {d!r}: {exc}") from exc


@dataclass
class TensorManifest:
    entries: list[ManifestEntry] = field(default_factory=list)
    root: Path = Path(".")

    def resolve(self, entry: ManifestEntry) -> Path:
        p = Path(entry.path)
        return p if p.is_absolute() else self.root / p

    def validate(self):
        seen = set()
        for e in self.entries:
            if e.name in seen:
                raise ContainerError(f"duplicate tensor name {e.name!r}")
            seen.add(e.name)
            get_format(e.dtype)
            if e.layout not in ("weights", "kv"):
                raise ContainerError(f"{e.name}: layout must be 'weights' or 'kv'")
            if e.layout == "kv":
                if not e.channels or e.channels < 1:
                    raise ContainerError(f"{e.name}: kv tensors need a channel count")
                if e.element_count % e.channels:
                    raise ContainerError(f"{e.name}: {e.element_count} elements not divisible by {e.channels} channels")

    def load_words(self, entry: ManifestEntry) -> np.ndarray:
        fmt = get_format(entry.dtype)
        path = self.resolve(entry)
        data = path.read_bytes()
        need = packed_size(entry.element_count, fmt)
        if len(data) != need:
            raise ContainerError(f"{entry.name}: {path} holds {len(data)} bytes, expected {need}")
        return unpack_words(data, entry.element_count, fmt)

    def to_json(self) -> str:
        doc = {"schema_version": MANIFEST_SCHEMA_VERSION, "tensors": [e.to_dict() for e in self.entries]}
        return json.dumps(doc, indent=2)

    def save(self, path):
        Path(path).write_text(self.to_json() + "\n")

    @classmethod
    def from_json(cls, text, root="."):
        doc = json.loads(text)
        tensors = doc.get("tensors", []) if isinstance(doc, dict) else doc
        return cls([ManifestEntry.from_dict(t) for t in tensors], Path(root))

    @classmethod
    def load(cls, path):
        path = Path(path)
        m = cls.from_json(path.read_text(), root=path.parent)
        m.validate()
        return m


# ---------------------------------------------------------------------------
# Writing


@dataclass(frozen=True)
class ContainerSettings:
    algo: CompressionAlgo = CompressionAlgo.ZSTD
    zstd_level: int = DEFAULT_ZSTD_LEVEL
    superblock: int = DEFAULT_SUPERBLOCK
    group_tokens: int | None = None
    layout_override: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "algo", CompressionAlgo.parse(self.algo))
        if self.superblock not in SUPERBLOCK_SIZES:
            raise ValueError(f"superblock size must be one of {SUPERBLOCK_SIZES}")
        if not -128 <= self.zstd_level <= 127:
            raise ValueError("zstd level must fit in a signed byte")
        if self.layout_override not in (None, "bitplane", "raw", "kv"):
            raise ValueError(f"unknown layout override {self.layout_override!r}")


def raw_segment_sizes(count: int, fmt: FloatFormat) -> list[int]:
    """Sizes of the ``n`` equal cuts of a byte-layout superblock."""
    total = packed_size(count, fmt)
    seg = plane_bytes(count)
    return [max(0, min(seg, total - i * seg)) for i in range(fmt.total_bits)]


def _raw_superblock(words, fmt, algo, level):
    data = ValueBlock.from_words(words, fmt).bits
    sizes = raw_segment_sizes(len(words), fmt)
    cuts = np.cumsum([0] + sizes)
    segments = [data[cuts[i] : cuts[i + 1]] for i in range(len(sizes))]
    payloads = compress_segments(segments, algo, level)
    return CompressedSuperblock(fmt, len(words), fmt.total_bits, algo, tuple(payloads), b"", level)


@dataclass
class _PendingTensor:
    name: str
    format: FloatFormat
    layout: Layout
    element_count: int
    superblocks: list[CompressedSuperblock]
    tokens_per_group: int = 0
    channels: int = 0


def _dtype_record(fmt: FloatFormat) -> bytes:
    if fmt.name in DTYPE_IDS and FORMATS.get(fmt.name) == fmt:
        return struct.pack("<B", DTYPE_IDS[fmt.name])
    if fmt.sign_bits != (1 if fmt.exp_bits else 0):
        raise FormatError(f"custom format {fmt.name!r} cannot be described inline")
    return struct.pack("<BBBh", CUSTOM_DTYPE_ID, fmt.exp_bits, fmt.frac_bits, fmt.bias)


def _custom_format(e, f, bias):
    for fmt in FORMATS.values():
        if (fmt.exp_bits, fmt.frac_bits, fmt.bias, fmt.sign_bits) == (e, f, bias, 1 if e else 0):
            return fmt
    return FloatFormat(f"e{e}f{f}b{bias}", e, f, 1 if e else 0, bias)


class ContainerWriter:
    """Collects tensors, then emits one container in a single pass."""

    def __init__(self, settings: ContainerSettings | None = None):
        self.settings = settings or ContainerSettings()
        self._tensors: list[_PendingTensor] = []

    def add_tensor(self, name, words, fmt, layout="bitplane", channels=None, tokens_per_group=None):
        fmt = get_format(fmt)
        if any(t.name == name for t in self._tensors):
            raise ContainerError(f"duplicate tensor name {name!r}")
        if len(name.encode()) > 0xFFFF:
            raise ContainerError("tensor name too long")
        layout = Layout.parse(layout)
        override = self.settings.layout_override
        if override == "raw":
            layout = Layout.RAW
        elif override == "bitplane":
            layout = Layout.BITPLANE
        w = np.asarray(words).ravel()
        s = self.settings
        if layout == Layout.KV:
            if not channels:
                raise ContainerError(f"{name}: kv layout needs a channel count")
            if w.size % channels:
                raise ContainerError(f"{name}: {w.size} words not divisible by {channels} channels")
            group = s.group_tokens or tokens_per_group or DEFAULT_GROUP_TOKENS
            sbs = []
            for g in split_tokens(w, fmt, w.size // channels, channels, group):
                matrix, meta = encode_group(g)
                sbs.append(compress_superblock(matrix, s.algo, meta, s.zstd_level))
            pending = _PendingTensor(name, fmt, layout, int(w.size), sbs, group, channels)
        else:
            m = s.superblock
            chunks = [w[i : i + m] for i in range(0, w.size, m)]
            if layout == Layout.RAW:
                sbs = [_raw_superblock(c, fmt, s.algo, s.zstd_level) for c in chunks]
            else:
                sbs = [compress_superblock(disaggregate(ValueBlock.from_words(c, fmt)), s.algo, None, s.zstd_level) for c in chunks]
            pending = _PendingTensor(name, fmt, layout, int(w.size), sbs)
        self._tensors.append(pending)
        return pending

    def _directory_entry(self, t: _PendingTensor, first_offset: int) -> bytes:
        name = t.name.encode()
        parts = [struct.pack("<H", len(name)), name, _dtype_record(t.format), struct.pack("<BQ", t.layout, t.element_count)]
        if t.layout == Layout.KV:
            parts.append(struct.pack("<HI", t.tokens_per_group, t.channels))
        parts.append(struct.pack("<IQ", len(t.superblocks), first_offset))
        return b"".join(parts)

    def to_bytes(self) -> bytes:
        s = self.settings
        header = _HEADER.pack(MAGIC, VERSION, 0, s.algo, s.zstd_level, s.superblock, len(self._tensors))
        dir_size = sum(len(self._directory_entry(t, 0)) for t in self._tensors)
        offset = len(header) + dir_size
        entries, records = [], []
        for t in self._tensors:
            entries.append(self._directory_entry(t, offset))
            for sb in t.superblocks:
                rec = sb.to_bytes()
                records.append(rec)
                offset += len(rec)
        return b"".join([header, *entries, *records])

    def write(self, out):
        data = self.to_bytes()
        if hasattr(out, "write"):
            out.write(data)
        else:
            try:
                Path(out).write_bytes(data)
            except OSError as exc:
                raise ContainerError(f"cannot write container to {out}: {exc}") from exc
        return len(data)


def write_container(manifest: TensorManifest, out, settings: ContainerSettings | None = None) -> int:
    """Compress every manifest tensor into a container at ``out``; returns its size."""
    manifest.validate()
    writer = ContainerWriter(settings)
    for e in manifest.entries:
        words = manifest.load_words(e)
        if e.layout == "kv":
            writer.add_tensor(e.name, words, e.dtype, "kv", e.channels, e.tokens_per_group)
        else:
            writer.add_tensor(e.name, words, e.dtype, "bitplane")
    return writer.write(out)


# ---------------------------------------------------------------------------
# Reading


@dataclass(frozen=True)
class SuperblockInfo:
    offset: int
    value_count: int
    plane_count: int
    meta_len: int
    plane_lengths: tuple[int, ...]

    @property
    def header_size(self) -> int:
        return _SB_FIXED.size + 4 * self.plane_count

    @property
    def size(self) -> int:
        return self.header_size + self.meta_len + sum(self.plane_lengths)

    def bytes_touched(self, k: int) -> int:
        return self.header_size + self.meta_len + sum(self.plane_lengths[:k])


@dataclass(frozen=True)
class TensorEntry:
    name: str
    format: FloatFormat
    layout: Layout
    element_count: int
    superblock_count: int
    first_offset: int
    tokens_per_group: int = 0
    channels: int = 0

    @property
    def tokens(self) -> int:
        return self.element_count // self.channels if self.channels else 0

    def fetch_planes(self, k: int) -> int:
        """Planes actually pulled from storage to serve a top-``k`` read.

        Byte-layout tensors need every segment. KV tensors keep their
        exponent fields as deltas, so a prefix that cuts into the exponent
        still fetches the whole exponent field before truncating.
        """
        n = self.format.total_bits
        if self.layout == Layout.RAW:
            return n
        if self.layout == Layout.KV and self.format.is_float:
            return max(k, self.format.sign_bits + self.format.exp_bits)
        return k


@dataclass
class TensorRead:
    entry: TensorEntry
    planes: int
    data: object
    bytes_touched: int

    def words(self) -> np.ndarray:
        if isinstance(self.data, ValueBlock):
            return self.data.words()
        if not self.data:
            return np.zeros(0, dtype=np.uint8)
        return np.concatenate([g.data for g in self.data])


@dataclass
class TensorStats:
    name: str
    format: FloatFormat
    layout: Layout
    algo: CompressionAlgo
    element_count: int
    raw_bytes: int
    stored_bytes: int
    header_bytes: int
    meta_bytes: int
    plane_raw_bytes: list[int]
    plane_stored_bytes: list[int]
    superblock_count: int

    @property
    def ratio(self) -> float:
        return self.raw_bytes / self.stored_bytes if self.stored_bytes else float("inf")

    @property
    def plane_ratios(self) -> list[float]:
        """Per-plane raw/stored, MSB plane first."""
        return [r / c if c else float("inf") for r, c in zip(self.plane_raw_bytes, self.plane_stored_bytes)]


class ContainerReader:
    """Random-access reader; only the header and directory are read eagerly.

    Set ``trace=True`` to record every ``(offset, length)`` read.
    """

    def __init__(self, source, trace=False):
        if isinstance(source, (bytes, bytearray, memoryview)):
            self._fh = io.BytesIO(bytes(source))
            self._owns = True
        elif hasattr(source, "read"):
            self._fh = source
            self._owns = False
        else:
            self._fh = open(source, "rb")
            self._owns = True
        self.trace = trace
        self.reads: list[tuple[int, int]] = []
        self._sb_cache: dict[str, list[SuperblockInfo]] = {}
        self._parse_directory()

    def close(self):
        if self._owns:
            self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def _read(self, offset, length) -> bytes:
        self._fh.seek(offset)
        data = self._fh.read(length)
        if len(data) != length:
            raise IntegrityError(f"short read at offset {offset}: wanted {length}, got {len(data)}")
        if self.trace:
            self.reads.append((offset, length))
        return data

    def _parse_directory(self):
        head = self._read(0, _HEADER.size)
        magic, version, flags, algo, level, sb_m, count = _HEADER.unpack(head)
        if magic != MAGIC:
            raise ContainerError(f"bad magic {magic!r}")
        if version != VERSION:
            raise ContainerError(f"unsupported container version {version}")
        self.flags = flags
        self.algo = CompressionAlgo(algo)
        self.zstd_level = level
        self.superblock_m = sb_m
        self.entries: dict[str, TensorEntry] = {}
        pos = _HEADER.size
        for _ in range(count):
            (name_len,) = struct.unpack("<H", self._read(pos, 2))
            pos += 2
            name = self._read(pos, name_len).decode()
            pos += name_len
            (dtype_id,) = struct.unpack("<B", self._read(pos, 1))
            pos += 1
            if dtype_id == CUSTOM_DTYPE_ID:
                e, f, bias = struct.unpack("<BBh", self._read(pos, 4))
                pos += 4
                fmt = _custom_format(e, f, bias)
            else:
                names = {v: k for k, v in DTYPE_IDS.items()}
                if dtype_id not in names:
                    raise ContainerError(f"{name}: unknown dtype id {dtype_id}")
                fmt = get_format(names[dtype_id])
            layout, elements = struct.unpack("<BQ", self._read(pos, 9))
            pos += 9
            tpg = channels = 0
            if layout == Layout.KV:
                tpg, channels = struct.unpack("<HI", self._read(pos, 6))
                pos += 6
            sb_count, first = struct.unpack("<IQ", self._read(pos, 12))
            pos += 12
            self.entries[name] = TensorEntry(name, fmt, Layout(layout), elements, sb_count, first, tpg, channels)
        self.directory_size = pos

    @property
    def names(self) -> list[str]:
        return list(self.entries)

    def entry(self, name) -> TensorEntry:
        try:
            return self.entries[name]
        except KeyError:
            raise KeyError(f"no tensor named {name!r} in container") from None

    def superblocks(self, name) -> list[SuperblockInfo]:
        """Superblock index for a tensor, built from record headers only."""
        if name in self._sb_cache:
            return self._sb_cache[name]
        e = self.entry(name)
        n = e.format.total_bits
        out, pos = [], e.first_offset
        for _ in range(e.superblock_count):
            head = self._read(pos, _SB_FIXED.size + 4 * n)
            count, planes, meta_len = _SB_FIXED.unpack_from(head, 0)
            if planes != n:
                raise IntegrityError(f"{name}: superblock at {pos} has {planes} planes, format has {n}")
            lens = struct.unpack_from(f"<{planes}I", head, _SB_FIXED.size)
            info = SuperblockInfo(pos, count, planes, meta_len, lens)
            out.append(info)
            pos += info.size
        self._sb_cache[name] = out
        return out

    def _fetch(self, info: SuperblockInfo, k: int):
        # header is already indexed; one contiguous read covers meta + top-k payloads
        start = info.offset + info.header_size
        body = self._read(start, info.meta_len + sum(info.plane_lengths[:k]))
        meta = body[: info.meta_len]
        payloads, pos = [], info.meta_len
        for n in info.plane_lengths[:k]:
            payloads.append(body[pos : pos + n])
            pos += n
        return meta, payloads

    def read_tensor(self, name, planes=None) -> TensorRead:
        """Decode a tensor, optionally only its top ``planes`` bit-planes.

        Absent planes read as zero bits. ``bytes_touched`` counts superblock
        headers, metadata and fetched payloads.
        """
        e = self.entry(name)
        fmt = e.format
        n = fmt.total_bits
        k = n if planes is None else int(planes)
        if not 1 <= k <= n:
            raise ValueError(f"planes={k} outside 1..{n}")
        kf = e.fetch_planes(k)
        touched = 0
        pieces = []
        for info in self.superblocks(name):
            meta, payloads = self._fetch(info, kf)
            touched += info.bytes_touched(kf)
            if e.layout == Layout.RAW:
                sizes = raw_segment_sizes(info.value_count, fmt)
                data = b"".join(decompress_segment(p, self.algo, sz, i) for i, (p, sz) in enumerate(zip(payloads, sizes)))
                words = unpack_words(data, info.value_count, fmt)
            else:
                sb = CompressedSuperblock(fmt, info.value_count, n, self.algo, tuple(payloads), meta, self.zstd_level)
                matrix = decompress_superblock(sb, kf)
                if e.layout == Layout.KV:
                    tokens = info.value_count // e.channels
                    group = decode_group(matrix, DeltaMeta.from_bytes(meta) if meta else None, tokens, e.channels)
                    if kf != k:
                        group = TokenGroup(fmt, group.tokens, group.channels, mask_top_bits(group.data, k, fmt))
                    pieces.append(group)
                    continue
                words = aggregate(matrix).words()
            if k != n:
                words = mask_top_bits(words, k, fmt)
            pieces.append(words)
        if e.layout == Layout.KV:
            data = pieces
        else:
            words = np.concatenate(pieces) if pieces else np.zeros(0, dtype=np.uint8)
            data = ValueBlock.from_words(words, fmt)
        return TensorRead(e, k, data, touched)

    def stat_tensor(self, name) -> TensorStats:
        e = self.entry(name)
        n = e.format.total_bits
        plane_raw = [0] * n
        plane_stored = [0] * n
        header = meta = stored = 0
        infos = self.superblocks(name)
        for info in infos:
            sizes = (
                raw_segment_sizes(info.value_count, e.format)
                if e.layout == Layout.RAW
                else [plane_bytes(info.value_count)] * n
            )
            for r in range(n):
                plane_raw[r] += sizes[r]
                plane_stored[r] += info.plane_lengths[r]
            header += info.header_size
            meta += info.meta_len
            stored += info.size
        return TensorStats(
            name, e.format, e.layout, self.algo, e.element_count, packed_size(e.element_count, e.format),
            stored, header, meta, plane_raw, plane_stored, len(infos),
        )


def open_container(path, trace=False) -> ContainerReader:
    return ContainerReader(path, trace=trace)


def read_tensor(container, name, planes=None) -> TensorRead:
    if isinstance(container, ContainerReader):
        return container.read_tensor(name, planes)
    with ContainerReader(container) as reader:
        return reader.read_tensor(name, planes)


def stat_tensor(container, name) -> TensorStats:
    if isinstance(container, ContainerReader):
        return container.stat_tensor(name)
    with ContainerReader(container) as reader:
        return reader.stat_tensor(name)
