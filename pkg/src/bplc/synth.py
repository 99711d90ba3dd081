"""Synthetic tensors with controlled statistics and an order-0 entropy oracle.

Generation uses numpy's PCG64 generator (``numpy.random.default_rng(seed)``)
and its standard-normal sampler, so a fixed seed gives identical bytes on
every run of the same numpy build.

The oracle is deliberately independent of the codec: it only counts symbol
frequencies, giving the size a memoryless coder would need for each segment.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .bitplane import disaggregate
from .container import ManifestEntry
from .float_format import ValueBlock, encode_array, get_format, pack_words, word_dtype
from .kv_transform import DEFAULT_GROUP_TOKENS, encode_group, split_tokens

KINDS = ("gaussian_weights", "channel_correlated_kv", "uniform_random", "constant")


@dataclass(frozen=True)
class SynthSpec:
    name: str
    kind: str
    format: str = "bf16"
    count: int | None = None
    tokens: int | None = None
    channels: int | None = None
    sigma: float = 0.05
    sigma_base: float = 1.0
    sigma_noise: float = 0.01
    value: float = 0.0
    seed: int = 0
    tokens_per_group: int = DEFAULT_GROUP_TOKENS

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown kind {self.kind!r}; expected one of {KINDS}")
        get_format(self.format)
        if self.kind == "channel_correlated_kv":
            if not self.tokens or not self.channels or self.tokens < 1 or self.channels < 1:
                raise ValueError("channel_correlated_kv needs positive tokens and channels")
        elif self.count is None and not (self.tokens and self.channels):
            raise ValueError(f"{self.kind} needs a count")
        if self.count is not None and self.count < 0:
            raise ValueError("count must be non-negative")
        if self.sigma <= 0 or self.sigma_base <= 0 or self.sigma_noise < 0:
            raise ValueError("sigmas must be positive (noise may be zero)")

    @property
    def element_count(self) -> int:
        if self.count is not None:
            return self.count
        return self.tokens * self.channels

    @property
    def is_kv(self) -> bool:
        return self.kind == "channel_correlated_kv"

    @property
    def shape(self) -> tuple[int, ...]:
        if self.tokens and self.channels:
            return (self.tokens, self.channels)
        return (self.element_count,)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "dtype" in d:
            d["format"] = d.pop("dtype")
        return cls(**d)


def _quantize_int(x, fmt, scale):
    # symmetric two's-complement quantisation into an n-bit integer field
    n = fmt.total_bits
    qmax = (1 << (n - 1)) - 1
    q = np.clip(np.rint(x / scale * qmax), -qmax - 1, qmax).astype(np.int64)
    return (q & fmt.word_mask).astype(word_dtype(fmt))


def _to_words(x, fmt, scale):
    if fmt.is_float:
        return encode_array(x, fmt)
    return _quantize_int(x, fmt, scale)


def generate(spec: SynthSpec) -> np.ndarray:
    """Words for ``spec``; token-major for KV tensors."""
    fmt = get_format(spec.format)
    rng = np.random.default_rng(spec.seed)
    n = spec.element_count
    if spec.kind == "gaussian_weights":
        return _to_words(rng.standard_normal(n) * spec.sigma, fmt, 4 * spec.sigma)
    if spec.kind == "channel_correlated_kv":
        base = rng.standard_normal(spec.channels) * spec.sigma_base
        noise = rng.standard_normal((spec.tokens, spec.channels)) * spec.sigma_noise
        return _to_words((base[None, :] * (1.0 + noise)).ravel(), fmt, 4 * spec.sigma_base)
    if spec.kind == "uniform_random":
        return rng.integers(0, 1 << fmt.total_bits, n, dtype=np.uint64).astype(word_dtype(fmt))
    if fmt.is_float:
        return encode_array(np.full(n, spec.value), fmt)
    return np.full(n, int(spec.value) & fmt.word_mask, dtype=word_dtype(fmt))


def write_tensor(spec: SynthSpec, out_dir) -> ManifestEntry:
    """Write ``spec`` as ``<out_dir>/<name>.bin`` and return its manifest entry."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    words = generate(spec)
    fname = f"{spec.name}.bin"
    (out_dir / fname).write_bytes(pack_words(words, spec.format))
    if spec.is_kv:
        return ManifestEntry(spec.name, spec.format, spec.shape, fname, "kv", spec.tokens_per_group, spec.channels)
    return ManifestEntry(spec.name, spec.format, spec.shape, fname, "weights")


# ---------------------------------------------------------------------------
# Entropy oracle


def byte_entropy_bytes(data) -> float:
    """Order-0 byte entropy of ``data`` expressed as a size in bytes."""
    buf = np.frombuffer(bytes(data), dtype=np.uint8)
    if buf.size == 0:
        return 0.0
    counts = np.bincount(buf, minlength=256)
    p = counts[counts > 0] / buf.size
    return float(-(p * np.log2(p)).sum() * buf.size / 8)


def bit_entropy_bytes(data, nbits=None) -> float:
    """Order-0 bit entropy of the first ``nbits`` bits of ``data``, in bytes."""
    bits = np.unpackbits(np.frombuffer(bytes(data), dtype=np.uint8), bitorder="little")
    if nbits is not None:
        bits = bits[:nbits]
    if bits.size == 0:
        return 0.0
    p = bits.mean()
    if p in (0.0, 1.0):
        return 0.0
    h = -(p * np.log2(p) + (1 - p) * np.log2(1 - p))
    return float(h * bits.size / 8)


@dataclass
class EntropyReport:
    layout: str
    raw_bytes: int
    segment_sizes: list[int] = field(default_factory=list)
    segment_bounds: list[float] = field(default_factory=list)
    segment_bit_bounds: list[float] = field(default_factory=list)
    overhead_bytes: int = 0

    @property
    def bound_bytes(self) -> float:
        return sum(self.segment_bounds) + self.overhead_bytes

    @property
    def bit_bound_bytes(self) -> float:
        return sum(self.segment_bit_bounds) + self.overhead_bytes

    @property
    def ratio_bound(self) -> float:
        return self.raw_bytes / self.bound_bytes if self.bound_bytes else float("inf")

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["schema_version", "layout", "segment", "size_bytes", "byte_entropy_bytes", "bit_entropy_bytes"])
        for i, (s, b, bb) in enumerate(zip(self.segment_sizes, self.segment_bounds, self.segment_bit_bounds)):
            w.writerow([1, self.layout, i, s, f"{b:.3f}", f"{bb:.3f}"])
        return buf.getvalue()


def entropy_oracle(words, fmt, layout="bit-plane", segment_bytes=4096, channels=None, group_tokens=DEFAULT_GROUP_TOKENS):
    """Per-segment order-0 entropy bounds for one of three layouts.

    ``byte-raw`` cuts the packed words into ``segment_bytes`` chunks;
    ``bit-plane`` splits blocks of ``8 * segment_bytes`` words into planes;
    ``kv-clustered`` applies channel grouping and exponent deltas per token
    group first and counts the per-channel base exponents as overhead.
    """
    fmt = get_format(fmt)
    w = np.asarray(words).ravel()
    block = ValueBlock.from_words(w, fmt)
    rep = EntropyReport(layout, block.nbytes)

    def add(seg, nbits=None):
        rep.segment_sizes.append(len(seg))
        rep.segment_bounds.append(byte_entropy_bytes(seg))
        rep.segment_bit_bounds.append(bit_entropy_bytes(seg, nbits))

    if layout == "byte-raw":
        data = block.bits
        for i in range(0, len(data), segment_bytes):
            add(data[i : i + segment_bytes])
    elif layout == "bit-plane":
        m = 8 * segment_bytes
        for i in range(0, w.size, m):
            chunk = w[i : i + m]
            for plane in disaggregate(ValueBlock.from_words(chunk, fmt)).plane_list():
                add(plane, chunk.size)
    elif layout == "kv-clustered":
        if not channels:
            raise ValueError("kv-clustered layout needs a channel count")
        for g in split_tokens(w, fmt, w.size // channels, channels, group_tokens):
            matrix, meta = encode_group(g)
            for plane in matrix.plane_list():
                add(plane, matrix.count)
            if meta is not None:
                rep.overhead_bytes += meta.channels
    else:
        raise ValueError(f"unknown layout {layout!r}")
    return rep
