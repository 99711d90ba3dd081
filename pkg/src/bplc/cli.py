"""Command-line front end: ``bplc synth|compress|decompress|stats|simulate``.

Exit codes: 0 success, 1 usage error, 2 data or integrity error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

from .codec import SUPERBLOCK_SIZES
from .container import ContainerReader, ContainerSettings, TensorManifest, write_container
from .costmodel import DramConfig, PrecisionSchedule, compare_layouts, reduction
from .errors import BplcError
from .float_format import pack_words
from .report import container_report, layout_comparison
from .synth import SynthSpec, write_tensor

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _emit(obj):
    print(json.dumps(obj, sort_keys=True))


def cmd_synth(args):
    doc = json.loads(Path(args.spec).read_text())
    specs = [SynthSpec.from_dict(t) for t in doc.get("tensors", [])]
    out = Path(args.out)
    manifest = TensorManifest([write_tensor(s, out) for s in specs], out)
    manifest.save(out / "manifest.json")
    _emit({"manifest": str(out / "manifest.json"), "tensors": [e.name for e in manifest.entries]})


def _settings(args):
    layout = None if args.layout in (None, "kv") else args.layout
    return ContainerSettings(args.algo, args.zstd_level, args.superblock, args.group_tokens, layout)


def cmd_compress(args):
    manifest = TensorManifest.load(args.manifest)
    size = write_container(manifest, args.out, _settings(args))
    s_orig = sum(Path(manifest.resolve(e)).stat().st_size for e in manifest.entries)
    _emit({"container": args.out, "s_orig": s_orig, "s_comp": size})


def cmd_decompress(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with ContainerReader(args.container) as reader:
        names = [args.tensor] if args.tensor else reader.names
        for name in names:
            if name not in reader.entries:
                raise KeyError(f"no tensor named {name!r} in container")
            res = reader.read_tensor(name, args.planes)
            (out / f"{name}.bin").write_bytes(pack_words(res.words(), res.entry.format))
            _emit({"tensor": name, "planes": res.planes, "bytes_touched": res.bytes_touched})


def cmd_stats(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with ContainerReader(args.container) as reader:
        rep = container_report(reader)
        (out / "report.json").write_text(rep.to_json() + "\n")
        (out / "tensors.csv").write_text(rep.tensor_csv())
        (out / "planes.csv").write_text(rep.plane_csv())
        settings = dict(algo=reader.algo, zstd_level=reader.zstd_level, superblock=reader.superblock_m)
    if args.compare_manifest:
        _write_layout_table(TensorManifest.load(args.compare_manifest), out / "layouts.csv", settings)
    _emit({"s_orig": rep.s_orig, "s_comp": rep.s_comp, "ratio": rep.ratio, "footprint_reduction": rep.footprint_reduction})


def _write_layout_table(manifest, path, settings):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["schema_version", "tensor", "layout", "s_orig", "s_comp", "ratio"])
    for e in manifest.entries:
        words = manifest.load_words(e)
        stats = layout_comparison(words, e.dtype, e.channels if e.layout == "kv" else None, **settings)
        for key, st in stats.items():
            w.writerow([1, e.name, key, st.raw_bytes, st.stored_bytes, repr(st.ratio)])
    path.write_text(buf.getvalue())


def cmd_simulate(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    schedule = PrecisionSchedule.load(args.schedule) if args.schedule else PrecisionSchedule()
    config = DramConfig.load(args.dram_config) if args.dram_config else DramConfig()
    with ContainerReader(args.container) as reader:
        p, t = compare_layouts(reader, schedule, config)
    for rep, stem in ((p, "bitplane"), (t, "byte_level")):
        (out / f"{stem}.json").write_text(rep.to_json() + "\n")
        (out / f"{stem}.csv").write_text(rep.to_csv())
    _emit({
        "bitplane": {"bytes": p.bytes_fetched, "energy_j": p.energy_joules, "latency_s": p.latency_seconds},
        "byte_level": {"bytes": t.bytes_fetched, "energy_j": t.energy_joules, "latency_s": t.latency_seconds},
        "energy_reduction": reduction(p.energy_joules, t.energy_joules),
        "latency_reduction": reduction(p.latency_seconds, t.latency_seconds),
    })


def build_parser():
    parser = _Parser(prog="bplc", description="Bit-plane tensor compression and DRAM traffic estimates.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="generate synthetic tensors and a manifest")
    p.add_argument("spec")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("compress", help="pack a manifest into a container")
    p.add_argument("manifest")
    p.add_argument("--out", required=True)
    p.add_argument("--algo", choices=["none", "lz4", "zstd"], default="zstd")
    p.add_argument("--zstd-level", type=int, default=3)
    p.add_argument("--superblock", type=int, choices=SUPERBLOCK_SIZES, default=32768)
    p.add_argument("--group-tokens", type=int, default=None)
    p.add_argument("--layout", choices=["bitplane", "raw", "kv"], default=None)
    p.set_defaults(func=cmd_compress)

    p = sub.add_parser("decompress", help="unpack tensors to raw files")
    p.add_argument("container")
    p.add_argument("--out", required=True)
    p.add_argument("--planes", type=int, default=None)
    p.add_argument("--tensor", default=None)
    p.set_defaults(func=cmd_decompress)

    p = sub.add_parser("stats", help="compression statistics as JSON and CSV")
    p.add_argument("container")
    p.add_argument("--out", required=True)
    p.add_argument("--compare-manifest", default=None, help="also tabulate raw / bit-plane / kv layouts")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("simulate", help="DRAM traffic for a precision schedule")
    p.add_argument("container")
    p.add_argument("--schedule", default=None)
    p.add_argument("--dram-config", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except (BplcError, ValueError, KeyError, OSError, json.JSONDecodeError) as exc:
        print(f"bplc: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
