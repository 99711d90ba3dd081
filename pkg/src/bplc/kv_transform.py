"""Cross-token KV clustering and exponent de-correlation.

A token group of ``tokens`` KV vectors with ``channels`` entries each is
regrouped channel-major, each channel's exponent fields are rewritten as
offsets from the channel minimum, and the result is split into bit-planes
as one block. Reads undo the steps in reverse.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bitplane import BitPlaneMatrix, aggregate, disaggregate
from .float_format import FloatFormat, ValueBlock, get_format, word_dtype

DEFAULT_GROUP_TOKENS = 16
MAX_GROUP_TOKENS = 1024


def _as_words(data, fmt, count):
    w = np.asarray(data).astype(word_dtype(fmt), copy=True).ravel()
    if w.size != count:
        raise ValueError(f"expected {count} words, got {w.size}")
    w.setflags(write=False)
    return w


@dataclass(frozen=True, eq=False)
class TokenGroup:
    """``tokens`` x ``channels`` words, token-major."""

    format: FloatFormat
    tokens: int
    channels: int
    data: np.ndarray

    def __post_init__(self):
        if self.tokens < 1 or self.channels < 1:
            raise ValueError("a token group needs at least one token and one channel")
        object.__setattr__(self, "format", get_format(self.format))
        object.__setattr__(self, "data", _as_words(self.data, self.format, self.tokens * self.channels))

    def __eq__(self, other):
        if not isinstance(other, TokenGroup):
            return NotImplemented
        return (self.format, self.tokens, self.channels) == (other.format, other.tokens, other.channels) and np.array_equal(
            self.data, other.data
        )


@dataclass(frozen=True, eq=False)
class ChannelGroupedBlock:
    """Same words as a TokenGroup, channel-major: ``data[j*tokens + t]``."""

    format: FloatFormat
    tokens: int
    channels: int
    data: np.ndarray

    def __post_init__(self):
        if self.tokens < 1 or self.channels < 1:
            raise ValueError("a grouped block needs at least one token and one channel")
        object.__setattr__(self, "format", get_format(self.format))
        object.__setattr__(self, "data", _as_words(self.data, self.format, self.tokens * self.channels))

    def rows(self) -> np.ndarray:
        """View as ``(channels, tokens)``."""
        return self.data.reshape(self.channels, self.tokens)

    def __eq__(self, other):
        if not isinstance(other, ChannelGroupedBlock):
            return NotImplemented
        return (self.format, self.tokens, self.channels) == (other.format, other.tokens, other.channels) and np.array_equal(
            self.data, other.data
        )


@dataclass(frozen=True, eq=False)
class DeltaMeta:
    """Per-channel base exponents, one byte each."""

    base_exponents: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.base_exponents, dtype=np.uint8).copy()
        b.setflags(write=False)
        object.__setattr__(self, "base_exponents", b)

    @property
    def channels(self) -> int:
        return int(self.base_exponents.size)

    def to_bytes(self) -> bytes:
        return self.base_exponents.tobytes()

    @classmethod
    def from_bytes(cls, data: bytes):
        return cls(np.frombuffer(data, dtype=np.uint8))

    def __eq__(self, other):
        if not isinstance(other, DeltaMeta):
            return NotImplemented
        return np.array_equal(self.base_exponents, other.base_exponents)


def group_by_channel(group: TokenGroup) -> ChannelGroupedBlock:
    data = group.data.reshape(group.tokens, group.channels).T.ravel()
    return ChannelGroupedBlock(group.format, group.tokens, group.channels, data)


def ungroup(block: ChannelGroupedBlock) -> TokenGroup:
    data = block.rows().T.ravel()
    return TokenGroup(block.format, block.tokens, block.channels, data)


def _exponents(words, fmt):
    return (words.astype(np.uint32) >> fmt.frac_bits) & fmt.exp_mask


def _replace_exponents(words, exps, fmt):
    keep = np.uint32(fmt.word_mask ^ (fmt.exp_mask << fmt.frac_bits))
    out = (words.astype(np.uint32) & keep) | (exps.astype(np.uint32) << fmt.frac_bits)
    return out.astype(word_dtype(fmt))


def delta_forward(block: ChannelGroupedBlock) -> tuple[ChannelGroupedBlock, DeltaMeta]:
    """Rewrite each exponent field as its offset from the channel minimum.

    Sign and fraction bits are untouched. Inf/NaN exponents take part as
    plain unsigned fields.
    """
    fmt = block.format
    fmt.require_exponent()
    rows = block.rows()
    exps = _exponents(rows, fmt)
    base = exps.min(axis=1)
    deltas = exps - base[:, None]
    out = _replace_exponents(rows, deltas, fmt)
    return ChannelGroupedBlock(fmt, block.tokens, block.channels, out.ravel()), DeltaMeta(base)


def delta_inverse(block: ChannelGroupedBlock, meta: DeltaMeta) -> ChannelGroupedBlock:
    fmt = block.format
    fmt.require_exponent()
    if meta.channels != block.channels:
        raise ValueError(f"meta has {meta.channels} channels, block has {block.channels}")
    rows = block.rows()
    exps = _exponents(rows, fmt) + meta.base_exponents.astype(np.uint32)[:, None]
    if int(exps.max(initial=0)) > fmt.exp_mask:
        raise ValueError("restored exponent overflows its field; meta does not belong to this block")
    out = _replace_exponents(rows, exps, fmt)
    return ChannelGroupedBlock(fmt, block.tokens, block.channels, out.ravel())


def kv_bitplane_concat(block: ChannelGroupedBlock) -> BitPlaneMatrix:
    """Plane i is channel 0's bit-i run, then channel 1's, and so on."""
    return disaggregate(ValueBlock.from_words(block.data, block.format))


def kv_bitplane_split(matrix: BitPlaneMatrix, tokens: int, channels: int) -> ChannelGroupedBlock:
    """Inverse of ``kv_bitplane_concat``; missing low planes come back as zeros."""
    if matrix.count != tokens * channels:
        raise ValueError(f"matrix holds {matrix.count} values, expected {tokens * channels}")
    return ChannelGroupedBlock(matrix.format, tokens, channels, aggregate(matrix).words())


def encode_group(group: TokenGroup) -> tuple[BitPlaneMatrix, DeltaMeta | None]:
    """Full forward path: grouping, exponent delta (float formats only), planes."""
    grouped = group_by_channel(group)
    meta = None
    if group.format.is_float:
        grouped, meta = delta_forward(grouped)
    return kv_bitplane_concat(grouped), meta


def decode_group(matrix: BitPlaneMatrix, meta: DeltaMeta | None, tokens: int, channels: int) -> TokenGroup:
    """Invert ``encode_group``.

    With a truncated matrix the low planes are zero *before* the exponent
    is restored, so exponent planes must be present for the delta to undo
    cleanly; a prefix that cuts into the exponent field restores
    ``base + truncated delta``.
    """
    grouped = kv_bitplane_split(matrix, tokens, channels)
    if meta is not None:
        grouped = delta_inverse(grouped, meta)
    return ungroup(grouped)


def split_tokens(words, fmt, tokens: int, channels: int, group_tokens: int = DEFAULT_GROUP_TOKENS) -> list[TokenGroup]:
    """Cut a token-major tensor into groups; the last group may be shorter."""
    if not 1 <= group_tokens <= MAX_GROUP_TOKENS:
        raise ValueError(f"group size {group_tokens} outside 1..{MAX_GROUP_TOKENS}")
    w = np.asarray(words).ravel()
    if w.size != tokens * channels:
        raise ValueError(f"{w.size} words do not form {tokens} x {channels}")
    return [
        TokenGroup(fmt, min(group_tokens, tokens - t0), channels, w[t0 * channels : (t0 + group_tokens) * channels])
        for t0 in range(0, tokens, group_tokens)
    ]
