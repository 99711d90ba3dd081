import csv
import io
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bplc.container import ContainerReader, ContainerSettings, ContainerWriter
from bplc.costmodel import (
    CSV_COLUMNS,
    DramConfig,
    PrecisionSchedule,
    byte_level_access,
    compare_layouts,
    estimate_access,
    reduction,
)
from bplc.float_format import get_format
from bplc.synth import SynthSpec, generate

from conftest import random_words


def _reader(tensors, algo="zstd", superblock=8192):
    w = ContainerWriter(ContainerSettings(algo=algo, superblock=superblock))
    for name, words, fmt, *kw in tensors:
        w.add_tensor(name, words, fmt, **(kw[0] if kw else {}))
    return ContainerReader(w.to_bytes())


@pytest.fixture(scope="module")
def mixed():
    rng = np.random.default_rng(99)
    return _reader([
        ("layer0.w", random_words(rng, "bf16", 20000), "bf16"),
        ("layer1.w", generate(SynthSpec("g", "gaussian_weights", count=30000, seed=1)), "bf16"),
        ("kv.0", generate(SynthSpec("k", "channel_correlated_kv", tokens=48, channels=64, seed=2)), "bf16",
         {"layout": "kv", "channels": 64}),
        ("q.int4", random_words(rng, "int4", 5000), "int4"),
    ])


def test_dram_defaults_and_validation():
    c = DramConfig()
    assert (c.channels, c.per_channel_bandwidth, c.row_buffer_bytes) == (4, 38.4e9, 8192)
    assert c.bandwidth == 4 * 38.4e9
    for bad in ({"channels": 0}, {"energy_activate": -1.0}, {"fixed_latency": 0.0}):
        with pytest.raises(ValueError):
            DramConfig(**bad)
    with pytest.raises(ValueError):
        DramConfig.from_dict({"bogus": 1})
    assert DramConfig.from_dict({"schema_version": 1, "channels": 2}).channels == 2


def test_schedule_resolution():
    s = PrecisionSchedule((("kv.*", "FP8"), ("layer*", 12)), default="FP4")
    bf16 = get_format("bf16")
    assert s.resolve("kv.3", bf16) == 8
    assert s.resolve("layer2.w", bf16) == 12
    assert s.resolve("other", bf16) == 4
    assert PrecisionSchedule().resolve("x", bf16) == 16
    with pytest.raises(ValueError):
        PrecisionSchedule.uniform(17).resolve("x", bf16)
    with pytest.raises(ValueError):
        s.check(["layer0.w"])
    doc = {"assignments": [{"pattern": "a*", "precision": 4}], "default": "full"}
    assert PrecisionSchedule.from_dict(doc) == PrecisionSchedule((("a*", 4),), "full")


def test_accounting_identity_with_reader(mixed):
    for k in ("FP4", "FP8", "FP12", None):
        sched = PrecisionSchedule((("q.*", "INT2"),), default=k)
        rep = estimate_access(mixed, sched)
        for t in rep.tensors:
            e = mixed.entry(t.name)
            assert t.bytes_fetched == mixed.read_tensor(t.name, t.planes).bytes_touched
            assert t.fetched_planes == e.fetch_planes(t.planes)
            assert t.bytes_fetched == t.header_bytes + t.meta_bytes + sum(t.plane_bytes)


def test_formulas(mixed):
    cfg = DramConfig()
    rep = estimate_access(mixed, PrecisionSchedule.uniform("full"), cfg)
    for t in rep.tensors:
        acts = sum(math.ceil(i.size / cfg.row_buffer_bytes) for i in mixed.superblocks(t.name))
        assert t.activations == acts
        assert t.read_energy == t.bytes_fetched * 8 * cfg.energy_read_per_bit
        assert t.activation_energy == acts * cfg.energy_activate
    assert rep.bytes_fetched == sum(t.bytes_fetched for t in rep.tensors)
    assert rep.energy_joules == pytest.approx(sum(t.energy for t in rep.tensors), rel=1e-12)
    assert rep.latency_seconds == pytest.approx(rep.bytes_fetched / cfg.bandwidth + cfg.fixed_latency, rel=1e-12)


def test_monotone_in_k(mixed):
    prev = None
    for k in range(1, 17):
        sched = PrecisionSchedule((("q.*", min(k, 4)),), default=k)
        rep = estimate_access(mixed, sched)
        cur = (rep.bytes_fetched, rep.activations, rep.energy_joules, rep.latency_seconds)
        if prev:
            assert all(c >= p for c, p in zip(cur, prev))
        prev = cur


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(1, 16), min_size=3, max_size=3), st.lists(st.integers(0, 15), min_size=3, max_size=3))
def test_subset_schedule_costs_less(mixed, ks, extra):
    names = ["layer0.w", "layer1.w", "kv.0"]
    a = PrecisionSchedule(tuple(zip(names, ks)) + (("q.*", 2),))
    b = PrecisionSchedule(tuple(zip(names, [min(16, k + x) for k, x in zip(ks, extra)])) + (("q.*", 4),))
    ra, rb = estimate_access(mixed, a), estimate_access(mixed, b)
    assert ra.energy_joules <= rb.energy_joules
    assert ra.latency_seconds <= rb.latency_seconds
    assert ra.bytes_fetched <= rb.bytes_fetched


def test_read_energy_is_linear(mixed):
    base = DramConfig()
    doubled = DramConfig(energy_read_per_bit=2 * base.energy_read_per_bit)
    s = PrecisionSchedule((("q.*", 2),), default=8)
    r1, r2 = estimate_access(mixed, s, base), estimate_access(mixed, s, doubled)
    for t1, t2 in zip(r1.tensors, r2.tensors):
        assert t2.read_energy == 2 * t1.read_energy
        assert t2.activation_energy == t1.activation_energy


def test_full_precision_algo_none_both_layouts_match():
    rng = np.random.default_rng(5)
    w = random_words(rng, "bf16", 50000)
    r = _reader([("t", w, "bf16")], algo="none", superblock=32768)
    p, t = compare_layouts(r, PrecisionSchedule())
    headers = sum(i.header_size for i in r.superblocks("t"))
    assert p.bytes_fetched == 100000 + headers
    assert t.bytes_fetched == 100000
    assert p.bytes_fetched - t.bytes_fetched == headers


def test_half_planes_on_random_data_is_half():
    rng = np.random.default_rng(6)
    w = rng.integers(0, 1 << 16, 65536, dtype=np.uint64).astype(np.uint16)
    r = _reader([("t", w, "fp16")], algo="zstd", superblock=32768)
    half = estimate_access(r, PrecisionSchedule.uniform(8)).bytes_fetched
    full = estimate_access(r, PrecisionSchedule()).bytes_fetched
    assert abs(half / full - 0.5) < 0.01


def test_fp12_byte_level_fetches_every_word():
    rng = np.random.default_rng(7)
    w = random_words(rng, "bf16", 32768)
    r = _reader([("t", w, "bf16")], algo="none", superblock=32768)
    p, t = compare_layouts(r, PrecisionSchedule.uniform("FP12"))
    assert t.bytes_fetched == 65536
    assert p.tensors[0].plane_bytes == [4096] * 12
    assert sum(p.tensors[0].plane_bytes) / 65536 == 0.75
    p8, t8 = compare_layouts(r, PrecisionSchedule.uniform("FP8"))
    assert t8.bytes_fetched == 32768


def test_odd_width_byte_level_charges_full_packing():
    r = _reader([("q", np.arange(1001) % 16, "int4")], algo="none")
    assert byte_level_access(r, PrecisionSchedule.uniform(2)).bytes_fetched == 501


def test_gaussian_fp8_bitplane_beats_byte_level():
    w = generate(SynthSpec("g", "gaussian_weights", count=1 << 18, seed=3))
    r = _reader([("g", w, "bf16")], superblock=32768)
    p, t = compare_layouts(r, PrecisionSchedule.uniform("FP8"))
    assert p.energy_joules < t.energy_joules
    assert p.latency_seconds < t.latency_seconds
    assert 0 < reduction(p.energy_joules, t.energy_joules) < 1


def test_json_and_csv_schema(mixed):
    rep = estimate_access(mixed, PrecisionSchedule.uniform("full"))
    doc = json.loads(rep.to_json())
    assert doc["schema_version"] == 1 and doc["model"] == "bitplane"
    assert doc["totals"]["bytes_fetched"] == sum(t["bytes_fetched"] for t in doc["tensors"])
    rows = list(csv.reader(io.StringIO(rep.to_csv())))
    assert rows[0] == CSV_COLUMNS
    assert [r[2] for r in rows[1:]] == mixed.names + ["TOTAL"]
    assert int(rows[-1][5]) == sum(int(r[5]) for r in rows[1:-1])


def test_reduction_helper():
    assert reduction(70, 100) == pytest.approx(0.3)
    assert reduction(1, 0) == 0.0
