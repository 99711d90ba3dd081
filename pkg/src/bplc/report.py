"""Experiment reports: compression ratios, footprint reduction, per-plane rows."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from .codec import CompressionAlgo, compress_segments, compression_ratio, footprint_reduction
from .container import ContainerReader, ContainerSettings, ContainerWriter, TensorStats
from .float_format import ValueBlock

REPORT_SCHEMA_VERSION = 1

PLANE_CSV_COLUMNS = [
    "schema_version", "tensor", "layout", "algo", "superblock", "plane", "raw_bytes", "stored_bytes", "ratio",
]
TENSOR_CSV_COLUMNS = [
    "schema_version", "tensor", "layout", "algo", "superblock", "s_orig", "s_comp", "ratio", "footprint_reduction",
]


@dataclass
class ExperimentReport:
    stats: list[TensorStats]
    superblock: int
    schedules: dict = field(default_factory=dict)

    @property
    def s_orig(self) -> int:
        return sum(s.raw_bytes for s in self.stats)

    @property
    def s_comp(self) -> int:
        return sum(s.stored_bytes for s in self.stats)

    @property
    def ratio(self) -> float:
        """Size-weighted overall ratio."""
        return compression_ratio(self.s_orig, self.s_comp)

    @property
    def footprint_reduction(self) -> float:
        return footprint_reduction(self.ratio)

    def to_dict(self):
        tensors = []
        for s in self.stats:
            tensors.append({
                "name": s.name,
                "format": s.format.name,
                "layout": s.layout.name.lower(),
                "algo": s.algo.name.lower(),
                "superblock": self.superblock,
                "s_orig": s.raw_bytes,
                "s_comp": s.stored_bytes,
                "header_bytes": s.header_bytes,
                "meta_bytes": s.meta_bytes,
                "ratio": s.ratio,
                "footprint_reduction": footprint_reduction(s.ratio),
                "planes": [
                    {"plane": s.format.total_bits - 1 - r, "raw_bytes": raw, "stored_bytes": st, "ratio": ratio}
                    for r, (raw, st, ratio) in enumerate(zip(s.plane_raw_bytes, s.plane_stored_bytes, s.plane_ratios))
                ],
            })
        return {
            "schema_version": REPORT_SCHEMA_VERSION,
            "aggregate": {
                "s_orig": self.s_orig,
                "s_comp": self.s_comp,
                "ratio": self.ratio if self.s_comp else None,
                "footprint_reduction": self.footprint_reduction if self.s_comp else None,
            },
            "tensors": tensors,
            "schedules": self.schedules,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def tensor_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TENSOR_CSV_COLUMNS)
        for t in self.to_dict()["tensors"]:
            w.writerow([REPORT_SCHEMA_VERSION, t["name"], t["layout"], t["algo"], self.superblock, t["s_orig"],
                        t["s_comp"], repr(t["ratio"]), repr(t["footprint_reduction"])])
        return buf.getvalue()

    def plane_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(PLANE_CSV_COLUMNS)
        for t in self.to_dict()["tensors"]:
            for p in t["planes"]:
                w.writerow([REPORT_SCHEMA_VERSION, t["name"], t["layout"], t["algo"], self.superblock, p["plane"],
                            p["raw_bytes"], p["stored_bytes"], repr(p["ratio"])])
        return buf.getvalue()


def container_report(reader: ContainerReader) -> ExperimentReport:
    return ExperimentReport([reader.stat_tensor(n) for n in reader.names], reader.superblock_m)


def layout_comparison(words, fmt, channels=None, algo=CompressionAlgo.ZSTD, zstd_level=3, superblock=32768,
                      group_tokens=None) -> dict[str, TensorStats]:
    """Store one tensor as raw bytes, plain bit-planes and (with ``channels``) KV-clustered planes.

    Returns stats keyed by ``raw``, ``bitplane`` and ``kv``.
    """
    w = np.asarray(words).ravel()
    out = {}
    variants = [("raw", "raw"), ("bitplane", "bitplane")]
    if channels:
        variants.append(("kv", None))
    for key, override in variants:
        settings = ContainerSettings(algo, zstd_level, superblock, group_tokens, override)
        writer = ContainerWriter(settings)
        if channels:
            writer.add_tensor("t", w, fmt, "kv", channels=channels)
        else:
            writer.add_tensor("t", w, fmt, "bitplane")
        out[key] = ContainerReader(writer.to_bytes()).stat_tensor("t")
    return out


def whole_tensor_ratio(words, fmt, algo=CompressionAlgo.ZSTD, zstd_level=3) -> float:
    """Byte layout compressed as a single stream, without 4 KB segmentation."""
    data = ValueBlock.from_words(np.asarray(words).ravel(), fmt).bits
    return compression_ratio(len(data), len(compress_segments([data], algo, zstd_level)[0]))
