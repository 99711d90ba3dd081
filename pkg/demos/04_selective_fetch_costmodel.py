#!/usr/bin/env python3
"""Precision schedules against a stored container: bytes, energy and latency."""

from bplc import ContainerReader, ContainerWriter, DramConfig, PrecisionSchedule, SynthSpec, compare_layouts, generate

writer = ContainerWriter()
writer.add_tensor("layers.0.mlp", generate(SynthSpec("a", "gaussian_weights", count=1 << 20, seed=1)), "bf16")
writer.add_tensor("layers.0.attn", generate(SynthSpec("b", "gaussian_weights", count=1 << 19, seed=2)), "bf16")
kv = generate(SynthSpec("kv", "channel_correlated_kv", tokens=256, channels=2048, seed=3))
writer.add_tensor("kv.0", kv, "bf16", "kv", channels=2048)
reader = ContainerReader(writer.to_bytes())

config = DramConfig()  # energy constants are placeholders; compare ratios, not joules
print(f"{'schedule':<28}{'P bytes':>12}{'T bytes':>12}{'energy':>10}{'latency':>10}")
schedules = {
    "full": PrecisionSchedule(),
    "FP12 everywhere": PrecisionSchedule.uniform("FP12"),
    "FP8 everywhere": PrecisionSchedule.uniform("FP8"),
    "mlp FP4, rest FP8": PrecisionSchedule((("*.mlp", "FP4"),), default="FP8"),
}
for label, schedule in schedules.items():
    p, t = compare_layouts(reader, schedule, config)
    print(f"{label:<28}{p.bytes_fetched:>12}{t.bytes_fetched:>12}"
          f"{1 - p.energy_joules / t.energy_joules:>10.1%}{1 - p.latency_seconds / t.latency_seconds:>10.1%}")

# prefix reads report exactly what the model charges
p, _ = compare_layouts(reader, PrecisionSchedule.uniform("FP8"), config)
read = reader.read_tensor("layers.0.mlp", 8)
print("\nbytes_touched for an FP8 read:", read.bytes_touched, "| modelled:", p.tensors[0].bytes_fetched)
print("kv.0 at FP8 fetches", p.tensors[2].fetched_planes, "planes: the exponent field is stored as deltas")
