"""Seeded property checks over random layers.

Each instance draws a small random layer, prunes it, maps it and simulates
it on a random ReLU-like input, then checks functional equivalence, index
round-trip, payload conservation and the index size formula.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .core import HardwareConfig, LayerWeights
from .mapping import (
    CHANNEL_COUNT_BITS,
    HEADER_FIXED_BITS,
    KERNEL_COUNT_BITS,
    IndexStream,
    map_layer,
    reconstruct_placement,
)
from .pruning import magnitude_prune, prune_layer
from .reference import conv2d
from .simulator import run_baseline_layer, run_layer
from .synthetic import random_layer, relu_feature_map

HW_CHOICES = [
    HardwareConfig(),
    HardwareConfig(ou_rows=4, ou_cols=4, crossbar_rows=64, crossbar_cols=16),
    HardwareConfig(ou_rows=2, ou_cols=3, crossbar_rows=25, crossbar_cols=7),
]
FAULTS = ("swap-records",)


@dataclass
class Instance:
    seed: int
    hw: HardwareConfig
    dense: LayerWeights
    irregular: LayerWeights
    projected: LayerWeights
    assignment: object
    feature_map: np.ndarray
    budget: int
    metric: str

    def describe(self) -> dict:
        return {
            "seed": self.seed,
            "shape": list(self.dense.weights.shape),
            "stride": self.dense.stride,
            "padding": self.dense.padding,
            "budget": self.budget,
            "metric": self.metric,
            "input_shape": list(self.feature_map.shape),
            "crossbar": [self.hw.crossbar_rows, self.hw.crossbar_cols],
            "ou": [self.hw.ou_rows, self.hw.ou_cols],
        }


def make_instance(seed: int) -> Instance:
    rng = np.random.default_rng(seed)
    dense = random_layer(rng, f"rand{seed}")
    hw = HW_CHOICES[int(rng.integers(len(HW_CHOICES)))]
    irregular = magnitude_prune(dense, float(rng.uniform(0.0, 0.9)))
    budget = int(rng.integers(1, 9))
    metric = str(rng.choice(["hamming", "cosine"]))
    projected, assignment = prune_layer(irregular, budget, metric, retain_from=dense)
    k = dense.kernel_h
    side = int(rng.integers(max(k, 2), 17))
    x = relu_feature_map(rng, dense.in_channels, side, side, float(rng.uniform(0.2, 0.8)), dead_block=side // 2)
    return Instance(seed, hw, dense, irregular, projected, assignment, x, budget, metric)


def swap_records(stream: IndexStream) -> IndexStream:
    """Swap the first two records of the busiest input channel."""
    counts = stream.channel_counts()
    ch = int(np.argmax(counts))
    if counts[ch] < 2:
        return stream
    records = list(stream.records)
    first = next(n for n, r in enumerate(records) if r.in_channel == ch)
    records[first], records[first + 1] = records[first + 1], records[first]
    return replace(stream, records=tuple(records))


def check_instance(inst: Instance, fault: str | None = None) -> list[dict]:
    """Return the failed checks for one instance (empty when all pass)."""
    failures = []

    def fail(check, detail):
        failures.append({"check": check, "detail": detail, "instance": inst.describe()})

    hw, layer = inst.hw, inst.projected
    placement, stream = map_layer(layer, inst.assignment, hw)
    if fault == "swap-records":
        stream = swap_records(stream)

    try:
        rebuilt = reconstruct_placement(IndexStream.from_bytes(stream.to_bytes()), hw)
        if rebuilt != placement:
            fail("roundtrip", "reconstructed placement differs from mapped placement")
    except Exception as exc:  # a corrupted stream may not even replay
        fail("roundtrip", f"{type(exc).__name__}: {exc}")

    nonzero_kernels = np.array([not p.is_zero for p in inst.assignment.candidates])[inst.assignment.ids]
    expected = int(np.count_nonzero(layer.weights[nonzero_kernels]))
    if placement.payload_cells != expected:
        fail("conservation", f"payload {placement.payload_cells} != nonzero weights {expected}")

    kk = layer.kernel_area
    closed_form = (
        HEADER_FIXED_BITS
        + CHANNEL_COUNT_BITS * layer.in_channels
        + sum(kk + KERNEL_COUNT_BITS + b.width * stream.index_bits for b in placement.blocks)
    )
    if len(stream.to_bytes()) != -(-stream.bit_length // 8) or stream.bit_length != closed_form:
        fail("index_formula", f"bit length {stream.bit_length} != closed form {closed_form}")

    if not failures:
        out, _ = run_layer(layer, inst.assignment, placement, stream, inst.feature_map, hw)
        if not np.array_equal(out, conv2d(layer.weights, inst.feature_map, layer.stride, layer.padding)):
            fail("equivalence", "pattern-path output differs from dense convolution of projected weights")
        out_b, _ = run_baseline_layer(inst.irregular, inst.feature_map, hw)
        if not np.array_equal(out_b, conv2d(inst.irregular.weights, inst.feature_map, layer.stride, layer.padding)):
            fail("equivalence", "baseline output differs from dense convolution of original weights")
    return failures


def run_suite(count: int, first_seed: int = 0, fault: str | None = None, stop_at_first: bool = True) -> list[dict]:
    failures = []
    for seed in range(first_seed, first_seed + count):
        failures.extend(check_instance(make_instance(seed), fault))
        if failures and stop_at_first:
            break
    return failures
