"""Closed-form DRAM traffic, energy and latency estimates for precision schedules.

The model is intentionally simple: bytes moved, one activation per row-buffer
worth of each contiguous run, a per-bit read energy, a per-activation energy
and a bandwidth-bound transfer time plus a fixed latency. Energy constants
are placeholders to be replaced with device data; only relative comparisons
between layouts and schedules are meaningful.
"""

from __future__ import annotations

import csv
import fnmatch
import io
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .bitplane import resolve_precision
from .container import ContainerReader, TensorEntry
from .float_format import packed_size

REPORT_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class DramConfig:
    channels: int = 4
    per_channel_bandwidth: float = 38.4e9  # DDR5-4800, 64-bit channel
    row_buffer_bytes: int = 8192
    energy_read_per_bit: float = 5e-12  # placeholder
    energy_activate: float = 2e-9  # placeholder
    fixed_latency: float = 1e-7

    def __post_init__(self):
        for k, v in asdict(self).items():
            if not v > 0:
                raise ValueError(f"DRAM parameter {k} must be positive, got {v}")

    @property
    def bandwidth(self) -> float:
        return self.channels * self.per_channel_bandwidth

    @classmethod
    def from_dict(cls, d):
        known = {k: v for k, v in d.items() if k != "schema_version"}
        unknown = set(known) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown DRAM config keys: {sorted(unknown)}")
        return cls(**known)

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class PrecisionSchedule:
    """Ordered ``(glob pattern, precision)`` rules; first match wins.

    A precision is a plane count or a named level such as ``"FP8"``.
    ``default`` applies to tensors no rule matches; ``None`` means full.
    """

    assignments: tuple[tuple[str, object], ...] = ()
    default: object = None

    def resolve(self, name, fmt) -> int:
        for pattern, precision in self.assignments:
            if fnmatch.fnmatchcase(name, pattern):
                return resolve_precision(precision, fmt)
        if self.default is None:
            return fmt.total_bits
        return resolve_precision(self.default, fmt)

    def check(self, names):
        for pattern, _ in self.assignments:
            if not any(fnmatch.fnmatchcase(n, pattern) for n in names):
                raise ValueError(f"schedule pattern {pattern!r} matches no tensor")

    @classmethod
    def uniform(cls, precision):
        return cls((), precision)

    @classmethod
    def from_dict(cls, d):
        rules = tuple((a["pattern"], a["precision"]) for a in d.get("assignments", []))
        return cls(rules, d.get("default"))

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass
class TensorAccess:
    name: str
    planes: int
    fetched_planes: int
    bytes_fetched: int
    activations: int
    header_bytes: int = 0
    meta_bytes: int = 0
    plane_bytes: list[int] = field(default_factory=list)
    read_energy: float = 0.0
    activation_energy: float = 0.0
    transfer_latency: float = 0.0

    @property
    def energy(self) -> float:
        return self.read_energy + self.activation_energy


@dataclass
class AccessReport:
    model: str
    config: DramConfig
    tensors: list[TensorAccess]

    @property
    def bytes_fetched(self) -> int:
        return sum(t.bytes_fetched for t in self.tensors)

    @property
    def activations(self) -> int:
        return sum(t.activations for t in self.tensors)

    @property
    def read_energy(self) -> float:
        return sum(t.read_energy for t in self.tensors)

    @property
    def activation_energy(self) -> float:
        return sum(t.activation_energy for t in self.tensors)

    @property
    def energy_joules(self) -> float:
        return self.read_energy + self.activation_energy

    @property
    def latency_seconds(self) -> float:
        return sum(t.transfer_latency for t in self.tensors) + self.config.fixed_latency

    def to_dict(self):
        return {
            "schema_version": REPORT_SCHEMA_VERSION,
            "model": self.model,
            "config": asdict(self.config),
            "totals": {
                "bytes_fetched": self.bytes_fetched,
                "activations": self.activations,
                "read_energy_j": self.read_energy,
                "activation_energy_j": self.activation_energy,
                "energy_j": self.energy_joules,
                "latency_s": self.latency_seconds,
            },
            "tensors": [asdict(t) for t in self.tensors],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for t in self.tensors:
            w.writerow([REPORT_SCHEMA_VERSION, self.model, t.name, t.planes, t.fetched_planes, t.bytes_fetched,
                        t.activations, repr(t.read_energy), repr(t.activation_energy), repr(t.energy),
                        repr(t.transfer_latency)])
        w.writerow([REPORT_SCHEMA_VERSION, self.model, "TOTAL", "", "", self.bytes_fetched, self.activations,
                    repr(self.read_energy), repr(self.activation_energy), repr(self.energy_joules),
                    repr(self.latency_seconds)])
        return buf.getvalue()


CSV_COLUMNS = [
    "schema_version", "model", "tensor", "planes", "fetched_planes", "bytes_fetched", "activations",
    "read_energy_j", "activation_energy_j", "energy_j", "latency_s",
]


def _charge(t: TensorAccess, config: DramConfig):
    t.read_energy = t.bytes_fetched * 8 * config.energy_read_per_bit
    t.activation_energy = t.activations * config.energy_activate
    t.transfer_latency = t.bytes_fetched / config.bandwidth
    return t


def _reader(source):
    return source if isinstance(source, ContainerReader) else ContainerReader(source)


def estimate_access(source, schedule: PrecisionSchedule, config: DramConfig | None = None) -> AccessReport:
    """Traffic for reading every tensor of a container under ``schedule``.

    Matches ``ContainerReader.read_tensor(...).bytes_touched`` tensor by tensor.
    """
    config = config or DramConfig()
    reader = _reader(source)
    schedule.check(reader.names)
    out = []
    for name in reader.names:
        e = reader.entry(name)
        k = schedule.resolve(name, e.format)
        kf = e.fetch_planes(k)
        acc = TensorAccess(name, k, kf, 0, 0, plane_bytes=[0] * kf)
        for info in reader.superblocks(name):
            run = info.bytes_touched(kf)
            acc.bytes_fetched += run
            acc.activations += math.ceil(run / config.row_buffer_bytes)
            acc.header_bytes += info.header_size
            acc.meta_bytes += info.meta_len
            for r in range(kf):
                acc.plane_bytes[r] += info.plane_lengths[r]
        out.append(_charge(acc, config))
    return AccessReport("bitplane", config, out)


def byte_level_bytes(value_count: int, entry: TensorEntry, k: int) -> int:
    """Bytes a byte-interleaved layout reads for a top-``k`` request.

    Whole trailing bytes of a word that hold no requested bit are skipped;
    anything else fetches the full word.
    """
    n = entry.format.total_bits
    if n % 8:
        return packed_size(value_count, entry.format)
    return value_count * math.ceil(k / 8)


def byte_level_access(source, schedule: PrecisionSchedule, config: DramConfig | None = None) -> AccessReport:
    """Same tensors, stored uncompressed and byte-interleaved."""
    config = config or DramConfig()
    reader = _reader(source)
    schedule.check(reader.names)
    out = []
    for name in reader.names:
        e = reader.entry(name)
        k = schedule.resolve(name, e.format)
        acc = TensorAccess(name, k, k, 0, 0)
        for info in reader.superblocks(name):
            span = packed_size(info.value_count, e.format)
            acc.bytes_fetched += byte_level_bytes(info.value_count, e, k)
            # strided byte fetches still open every row of the span
            acc.activations += math.ceil(span / config.row_buffer_bytes)
        out.append(_charge(acc, config))
    return AccessReport("byte-level", config, out)


def compare_layouts(source, schedule: PrecisionSchedule, config: DramConfig | None = None):
    """``(bit-plane report, byte-level report)`` under one config."""
    reader = _reader(source)
    return estimate_access(reader, schedule, config), byte_level_access(reader, schedule, config)


def reduction(proposed: float, baseline: float) -> float:
    """Relative saving of ``proposed`` over ``baseline``."""
    return 1.0 - proposed / baseline if baseline else 0.0


__all__ = [
    "DramConfig",
    "PrecisionSchedule",
    "TensorAccess",
    "AccessReport",
    "estimate_access",
    "byte_level_access",
    "compare_layouts",
    "reduction",
]
