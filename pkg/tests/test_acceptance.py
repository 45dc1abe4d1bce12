"""Acceptance suite: one test per criterion, tolerances pinned here.

The terminal summary (conftest.py) prints one PASS/FAIL line per criterion.
"""

from __future__ import annotations

import math
import time
from dataclasses import replace
from functools import lru_cache

import numpy as np
import pytest

from oracles import conv2d_windows, record_bits
from patternmap import HardwareConfig
from patternmap.cli import main
from patternmap.core import LayerWeights
from patternmap.energy import energy_of
from patternmap.mapping import (
    IndexStream,
    baseline_map,
    emit_index_stream,
    map_layer,
    reconstruct_placement,
)
from patternmap.pipeline import RunConfig, process_stack
from patternmap.pruning import magnitude_prune, prune_layer
from patternmap.simulator import run_baseline_layer, run_layer
from patternmap.synthetic import PROFILES, example_layer, relu_feature_map, vgg16_layers
from patternmap.verify import make_instance

# pinned tolerances and suite sizes
N_INSTANCES = 100
RUNTIME_BASELINE_S = 1.0
RUNTIME_EQUIV_S = 60.0
RUNTIME_AREA_S = 300.0
AREA_LOWER_FRACTION = 0.80
AREA_SPARSITY_TARGET = 0.85
AREA_SPARSITY_BAND = 0.05  # "s ≈ 0.85"
AREA_SUITE = [(profile, seed) for profile in ("cifar10", "cifar100") for seed in (0, 1, 2)]
FULL_OU_PJ = 18.3238
PJ_ATOL = 1e-9
ADC_SHARE_MIN = 0.50


@lru_cache(maxsize=None)
def instances():
    return [make_instance(seed) for seed in range(N_INSTANCES)]


@lru_cache(maxsize=None)
def mapped():
    return [map_layer(inst.projected, inst.assignment, inst.hw) for inst in instances()]


@pytest.mark.criterion(1, "baseline footprint 9x16 = 144 cells, < 1 s")
def test_c1_baseline_footprint():
    start = time.perf_counter()
    layer = example_layer()
    base = baseline_map(layer, HardwareConfig())
    elapsed = time.perf_counter() - start
    assert (layer.out_channels, layer.in_channels, layer.kernel_h) == (16, 1, 3)
    assert (base.rows, base.cols) == (9, 16)
    assert base.cells == 144
    assert base.crossbars_used == 1
    assert elapsed < RUNTIME_BASELINE_S


@pytest.mark.criterion(2, "functional equivalence, bit-exact, >=100 random layers, < 60 s")
def test_c2_functional_equivalence():
    start = time.perf_counter()
    insts = instances()
    assert len(insts) >= 100
    for inst, (placement, stream) in zip(insts, mapped()):
        k = inst.dense.kernel_h
        assert k in (1, 3, 5)
        assert inst.dense.out_channels <= 32 and inst.dense.in_channels <= 32
        assert inst.feature_map.shape[1] <= 16 and inst.feature_map.shape[2] <= 16
        layer = inst.projected
        out, _ = run_layer(layer, inst.assignment, placement, stream, inst.feature_map, inst.hw)
        want = conv2d_windows(layer.weights, inst.feature_map, layer.stride, layer.padding)
        assert np.array_equal(out, want), f"pattern path, seed {inst.seed}"
        out_b, _ = run_baseline_layer(inst.irregular, inst.feature_map, inst.hw)
        want_b = conv2d_windows(inst.irregular.weights, inst.feature_map, layer.stride, layer.padding)
        assert np.array_equal(out_b, want_b), f"baseline path, seed {inst.seed}"
    assert time.perf_counter() - start < RUNTIME_EQUIV_S


@pytest.mark.criterion(3, "index roundtrip reconstructs the exact placement")
def test_c3_index_roundtrip():
    for inst, (placement, stream) in zip(instances(), mapped()):
        assert emit_index_stream(placement, inst.hw) == stream
        wire = IndexStream.from_bytes(stream.to_bytes())
        assert wire == stream
        assert reconstruct_placement(wire, inst.hw) == placement, f"seed {inst.seed}"


@pytest.mark.criterion(4, "payload conservation, exact")
def test_c4_payload_conservation():
    for inst, (placement, _) in zip(instances(), mapped()):
        w = inst.projected.weights
        nonzero_pattern = ~np.array([p.is_zero for p in inst.assignment.candidates])[inst.assignment.ids]
        expected = int(np.count_nonzero(w[nonzero_pattern]))
        assert sum(b.height * b.width for b in placement.blocks) == expected, f"seed {inst.seed}"
        assert placement.payload_cells == expected


def _area_point(profile, seed):
    layers = vgg16_layers(seed, 1.0, profile)
    target = PROFILES[profile]["irregular_sparsity"]
    hw = HardwareConfig()
    base_cells = pat_cells = zeros = total = 0
    for layer, budget in zip(layers, PROFILES[profile]["budgets"]):
        assert budget <= 8
        irregular = magnitude_prune(layer, target)
        projected, assignment = prune_layer(irregular, budget, "hamming", retain_from=layer)
        placement, _ = map_layer(projected, assignment, hw)
        base_cells += baseline_map(projected, hw).area_cells(hw)
        pat_cells += placement.area_cells(hw)
        zeros += projected.size - int(np.count_nonzero(projected.weights))
        total += projected.size
    return zeros / total, base_cells / pat_cells


@pytest.mark.slow
@pytest.mark.criterion(5, "area efficiency within [0.80, 1]/(1-s) on VGG16-shaped stacks, < 5 min")
def test_c5_area_efficiency_bound():
    start = time.perf_counter()
    failures = []
    for profile, seed in AREA_SUITE:
        s, eff = _area_point(profile, seed)
        ideal = 1.0 / (1.0 - s)
        print(f"{profile} seed {seed}: s={s:.4f} efficiency={eff:.3f} ideal={ideal:.3f} ratio={eff / ideal:.3f}")
        assert abs(s - AREA_SPARSITY_TARGET) <= AREA_SPARSITY_BAND
        if not (AREA_LOWER_FRACTION * ideal <= eff <= ideal):
            failures.append(f"{profile}/{seed}: {eff:.3f} not in [{AREA_LOWER_FRACTION * ideal:.3f}, {ideal:.3f}]")
    assert time.perf_counter() - start < RUNTIME_AREA_S
    assert not failures, "; ".join(failures)


@pytest.mark.criterion(6, "energy identity, ADC dominance, 18.3238 pJ per full OU, pattern <= baseline")
def test_c6_energy():
    hw = HardwareConfig()
    # one full 9x8 OU: 3x3 kernel, one input channel, 8 filters, one output position
    layer = LayerWeights("full", np.ones((8, 1, 3, 3), dtype=np.int64))
    _, stats = run_baseline_layer(layer, np.ones((1, 3, 3), dtype=np.int64), hw)
    assert stats.ou_activations == 1 and stats.adc_conversions == 8 and stats.dac_conversions == 9
    e = energy_of(stats, hw)
    assert math.isclose(e.e_total_pj, FULL_OU_PJ, rel_tol=0, abs_tol=PJ_ATOL)
    assert e.e_total_pj == e.e_crossbar_pj + e.e_adc_pj_total + e.e_dac_pj_total
    assert e.adc_share > ADC_SHARE_MIN

    # a larger full-OU workload keeps the ADC share
    big = LayerWeights("big", np.ones((16, 2, 3, 3), dtype=np.int64))
    _, stats = run_baseline_layer(big, np.ones((2, 6, 6), dtype=np.int64), hw)
    e = energy_of(stats, hw)
    assert e.e_total_pj == e.e_crossbar_pj + e.e_adc_pj_total + e.e_dac_pj_total
    assert e.adc_share > ADC_SHARE_MIN

    # identity holds on every simulated layer; pattern never costs more than baseline
    records = process_stack(
        vgg16_layers(0, 0.25, "cifar10"),
        PROFILES["cifar10"]["budgets"],
        hw,
        RunConfig(target_sparsity=PROFILES["cifar10"]["irregular_sparsity"]),
    )
    assert any(r["zero_kernel_ratio"] > 0 for r in records)
    for r in records:
        for side in ("baseline", "pattern"):
            en = r[side]["energy"]
            assert en["e_total_pj"] == en["e_crossbar_pj"] + en["e_adc_pj_total"] + en["e_dac_pj_total"]
        assert r["pattern"]["energy"]["e_total_pj"] <= r["baseline"]["energy"]["e_total_pj"], r["name"]
        assert r["pattern"]["cycles"]["cycles"] <= r["baseline"]["cycles"]["cycles"], r["name"]


@pytest.mark.criterion(7, "zero-input skipping keeps outputs and strictly reduces ADC conversions")
def test_c7_skipping_soundness():
    checked = 0
    for inst, (placement, stream) in zip(instances(), mapped()):
        if placement.payload_cells == 0:
            continue
        rng = np.random.default_rng(10_000 + inst.seed)
        x = relu_feature_map(rng, inst.dense.in_channels, 16, 16, 0.5, dead_block=8)
        on = replace(inst.hw, skip_zero_inputs=True, baseline_skip_zero_inputs=True)
        off = replace(inst.hw, skip_zero_inputs=False, baseline_skip_zero_inputs=False)
        out_on, s_on = run_layer(inst.projected, inst.assignment, placement, stream, x, on)
        out_off, s_off = run_layer(inst.projected, inst.assignment, placement, stream, x, off)
        assert np.array_equal(out_on, out_off)
        assert s_on.adc_conversions < s_off.adc_conversions, f"pattern path, seed {inst.seed}"
        b_on, t_on = run_baseline_layer(inst.irregular, x, on)
        b_off, t_off = run_baseline_layer(inst.irregular, x, off)
        assert np.array_equal(b_on, b_off)
        assert t_on.adc_conversions < t_off.adc_conversions, f"baseline path, seed {inst.seed}"
        checked += 1
    assert checked >= 50


@pytest.mark.criterion(8, "serialized index length equals the closed form; 9 index bits at O=512")
def test_c8_index_formula():
    for inst, (placement, stream) in zip(instances(), mapped()):
        kk = inst.projected.kernel_area
        header = 56 + 16 * inst.projected.in_channels
        body = record_bits(kk, [b.width for b in placement.blocks], stream.index_bits)
        assert stream.bit_length == header + body
        assert len(stream.to_bytes()) == -(-(header + body) // 8)
        assert stream.index_bits == max(1, math.ceil(math.log2(inst.projected.out_channels)))
    assert HardwareConfig().resolve_index_bits(512) == 9
    layer = vgg16_layers(0, 1.0)[-1]
    assert layer.out_channels == 512
    projected, assignment = prune_layer(magnitude_prune(layer, 0.8195), 8, retain_from=layer)
    _, stream = map_layer(projected, assignment, HardwareConfig())
    assert stream.index_bits == 9


@pytest.mark.criterion(9, "byte-identical report.json across repeated runs")
def test_c9_determinism(tmp_path):
    outputs = []
    for n in range(2):
        out = tmp_path / f"run{n}"
        assert main(["run", "--synthetic", "vgg16", "--seed", "7", "--jobs", str(n + 1), "--chart", "--out", str(out)]) == 0
        outputs.append(out)
    for name in ("report.json", "report.csv", "chart.svg"):
        assert (outputs[0] / name).read_bytes() == (outputs[1] / name).read_bytes(), name
