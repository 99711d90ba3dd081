#!/usr/bin/env python3
"""KV cache: group by channel, subtract a per-channel base exponent, then split into planes."""

import numpy as np

from bplc import (
    SynthSpec,
    TokenGroup,
    delta_forward,
    entropy_oracle,
    generate,
    group_by_channel,
    kv_bitplane_concat,
)
from bplc.report import layout_comparison

tokens, channels = 1024, 2048
words = generate(SynthSpec("kv", "channel_correlated_kv", "bf16", tokens=tokens, channels=channels, seed=7))

# one 16-token group, before and after the exponent delta
group = TokenGroup("bf16", 16, channels, words[: 16 * channels])
grouped = group_by_channel(group)
delta, meta = delta_forward(grouped)
before = kv_bitplane_concat(grouped).planes[1:9]
after = kv_bitplane_concat(delta).planes[1:9]
print("set bits per exponent plane, first group")
print("  before delta:", [int(np.unpackbits(p).sum()) for p in before])
print("  after delta :", [int(np.unpackbits(p).sum()) for p in after])
print("  base exponents (first 8 channels):", meta.base_exponents[:8].tolist())

print("\norder-0 bounds")
for layout in ("byte-raw", "bit-plane", "kv-clustered"):
    rep = entropy_oracle(words, "bf16", layout, channels=channels)
    print(f"  {layout:<13} {rep.ratio_bound:.3f}")

print("\nzstd, stored containers")
for name, st in layout_comparison(words, "bf16", channels=channels).items():
    print(f"  {name:<9} ratio {st.ratio:.3f}  ({st.stored_bytes} of {st.raw_bytes} bytes)")

# with few channels the token-major planes repeat every channels/8 bytes, which zstd matches on its own
narrow = generate(SynthSpec("kv", "channel_correlated_kv", "bf16", tokens=1024, channels=512, seed=7))
print("\n512 channels instead:", {k: round(v.ratio, 3) for k, v in layout_comparison(narrow, "bf16", channels=512).items()})
