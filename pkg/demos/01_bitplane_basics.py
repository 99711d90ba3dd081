#!/usr/bin/env python3
"""Bit-planes by hand: split a few bf16 words, look at the planes, truncate."""

import numpy as np

from bplc import ValueBlock, aggregate, decode_array, disaggregate, encode_array, truncate_planes

values = np.array([1.0, -0.5, 0.0390625, 3.14159, -2.0, 0.1, 65504.0, 1e-3])
words = encode_array(values, "bf16")
print("values :", values)
print("words  :", [f"{w:04x}" for w in words])

matrix = disaggregate(ValueBlock.from_words(words, "bf16"))
print(f"\n{matrix.total_planes} planes of {matrix.planes.shape[1]} byte(s) each, MSB plane first")
for row, plane in enumerate(matrix.planes):
    bit = 15 - row
    role = "sign" if bit == 15 else "exp " if bit >= 7 else "frac"
    bits = np.unpackbits(plane, bitorder="little")[: len(words)]
    print(f"  bit {bit:2d} ({role}): {''.join(map(str, bits))}")

# top 8 planes of bf16 hold the sign and only seven of the eight exponent bits,
# so magnitudes snap down to even powers of two; nine planes keep the whole exponent
for k in (8, 9, 12):
    top = truncate_planes(matrix, k)
    print(f"\ntop {k:2d} planes ({top.stored_bytes} of {matrix.stored_bytes} bytes) ->")
    print("  ", decode_array(aggregate(top).words(), "bf16"))

# the round trip with every plane present is exact
assert np.array_equal(aggregate(matrix).words(), words)
print("full round trip exact")
