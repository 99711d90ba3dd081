#!/usr/bin/env python3
"""Gaussian bf16 weights: byte layout vs bit-plane layout, plane by plane."""

import numpy as np

from bplc import ContainerReader, ContainerSettings, ContainerWriter, SynthSpec, entropy_oracle, generate

words = generate(SynthSpec("w", "gaussian_weights", "bf16", count=1 << 21, sigma=0.05, seed=42))


def stats(override):
    writer = ContainerWriter(ContainerSettings(algo="zstd", layout_override=override))
    writer.add_tensor("w", words, "bf16")
    return ContainerReader(writer.to_bytes()).stat_tensor("w")


byte_layout, planes = stats("raw"), stats("bitplane")
print(f"order-0 bound, byte segments : {entropy_oracle(words, 'bf16', 'byte-raw').ratio_bound:.3f}")
print(f"order-0 bound, plane segments: {entropy_oracle(words, 'bf16', 'bit-plane').ratio_bound:.3f}")
print(f"zstd, byte layout            : {byte_layout.ratio:.3f}")
print(f"zstd, bit-plane layout       : {planes.ratio:.3f}  ({planes.ratio / byte_layout.ratio - 1:+.1%})")

print("\nper-plane ratio (MSB first)")
for row, r in enumerate(planes.plane_ratios):
    bit = 15 - row
    bar = "#" * min(60, int(np.log2(r) * 8) + 1)
    print(f"  bit {bit:2d}  {r:8.2f}  {bar}")

# the exponent planes carry almost all of the redundancy; mantissa planes stay raw
print("\nsigma sweep (zstd bit-plane ratio)")
for sigma in (0.01, 0.02, 0.05, 0.1):
    w = generate(SynthSpec("s", "gaussian_weights", "bf16", count=1 << 20, sigma=sigma, seed=42))
    writer = ContainerWriter()
    writer.add_tensor("s", w, "bf16")
    print(f"  sigma={sigma:<5} {ContainerReader(writer.to_bytes()).stat_tensor('s').ratio:.3f}")
