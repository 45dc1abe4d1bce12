"""Prune, map, simulate and account for one layer or a whole stack."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import HardwareConfig, LayerWeights, assignment_from_supports, sparsity
from .energy import compare, energy_of
from .mapping import baseline_map, index_overhead, map_layer
from .pruning import magnitude_prune, prune_layer
from .reference import conv2d
from .simulator import run_baseline_layer, run_layer
from .synthetic import relu_feature_map


@dataclass(frozen=True)
class RunConfig:
    metric: str = "hamming"
    include_zero: bool = True
    target_sparsity: float | None = None
    pre_pruned: bool = False
    input_size: int = 8
    input_zero_fraction: float = 0.5
    seed: int = 0
    check_outputs: bool = True


def generated_input(layer: LayerWeights, index: int, config: RunConfig) -> np.ndarray:
    rng = np.random.default_rng([config.seed, index])
    size = max(config.input_size, layer.kernel_h, layer.kernel_w)
    return relu_feature_map(rng, layer.in_channels, size, size, config.input_zero_fraction, dead_block=size // 2)


def _ratio(num: float, den: float) -> float | None:
    return num / den if den else None


def process_layer(
    layer: LayerWeights,
    budget: int,
    hw: HardwareConfig,
    config: RunConfig = RunConfig(),
    feature_map: np.ndarray | None = None,
    index: int = 0,
) -> dict:
    """Full flow for one layer; returns the per-layer report record."""
    if config.pre_pruned:
        irregular = projected = layer
        assignment = assignment_from_supports(layer)
    else:
        irregular = magnitude_prune(layer, config.target_sparsity) if config.target_sparsity else layer
        retain = layer if irregular is not layer else None
        projected, assignment = prune_layer(irregular, budget, config.metric, config.include_zero, retain_from=retain)

    placement, stream = map_layer(projected, assignment, hw)
    base = baseline_map(irregular, hw)

    x = generated_input(layer, index, config) if feature_map is None else np.asarray(feature_map)
    out_p, stats_p = run_layer(projected, assignment, placement, stream.to_bytes(), x, hw)
    out_b, stats_b = run_baseline_layer(irregular, x, hw)
    e_p, e_b = energy_of(stats_p, hw), energy_of(stats_b, hw)

    kernel_zero = np.array([p.is_zero for p in assignment.candidates])[assignment.ids]
    used = {assignment.candidates[k] for k in np.unique(assignment.ids)}
    record = {
        "name": layer.name,
        "shape": list(layer.weights.shape),
        "budget": budget,
        "sparsity_before": sparsity(irregular),
        "sparsity_after": sparsity(projected),
        "candidate_count": len(assignment.candidates),
        "pattern_count": sum(1 for p in used if not p.is_zero),
        "zero_kernel_ratio": float(kernel_zero.mean()),
        "nonzero_weights": int(np.count_nonzero(projected.weights)),
        "baseline": {
            "cells": base.area_cells(hw),
            "crossbars": base.area_crossbars(hw),
            "cycles": stats_b.as_dict(),
            "energy": e_b.as_dict(),
        },
        "pattern": {
            "payload_cells": placement.payload_cells * hw.cells_per_weight,
            "waste_cells": placement.wasted_cells * hw.cells_per_weight,
            "cells": placement.area_cells(hw),
            "crossbars": placement.area_crossbars(hw),
            "cycles": stats_p.as_dict(),
            "energy": e_p.as_dict(),
        },
        "area_efficiency": _ratio(base.area_cells(hw), placement.area_cells(hw)),
        "speedup": _ratio(stats_b.cycles, stats_p.cycles),
        "index": index_overhead(stream, placement, hw),
    }
    if e_b.e_total_pj > 0:
        ratios = compare(e_p, e_b)
        record["normalized_energy"] = ratios["normalized_energy"]
        record["energy_efficiency"] = ratios["energy_efficiency"]
    else:
        record["normalized_energy"] = record["energy_efficiency"] = None
    if config.check_outputs:
        record["outputs_verified"] = bool(
            np.array_equal(out_p, conv2d(projected.weights, x, layer.stride, layer.padding))
            and np.array_equal(out_b, conv2d(irregular.weights, x, layer.stride, layer.padding))
        )
    return record


def process_stack(
    layers: Sequence[LayerWeights],
    budgets: Sequence[int],
    hw: HardwareConfig,
    config: RunConfig = RunConfig(),
    feature_maps: dict | None = None,
    jobs: int = 1,
) -> list[dict]:
    if len(budgets) != len(layers):
        raise ValueError(f"{len(budgets)} budgets given for {len(layers)} layers")
    feature_maps = feature_maps or {}

    def work(n):
        layer = layers[n]
        fmap = feature_maps.get(layer.name)
        return process_layer(layer, budgets[n], hw, config, None if fmap is None else fmap.data, n)

    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        return list(pool.map(work, range(len(layers))))


def aggregate(records: Sequence[dict], hw: HardwareConfig) -> dict:
    def total(path):
        acc = 0
        for r in records:
            v = r
            for key in path:
                v = v[key]
            acc += v
        return acc

    base_cells, pat_cells = total(("baseline", "cells")), total(("pattern", "cells"))
    base_cycles, pat_cycles = total(("baseline", "cycles", "cycles")), total(("pattern", "cycles", "cycles"))
    base_e, pat_e = total(("baseline", "energy", "e_total_pj")), total(("pattern", "energy", "e_total_pj"))
    weights = sum(int(np.prod(r["shape"])) for r in records)
    nonzero = total(("nonzero_weights",))
    kernels = sum(r["shape"][0] * r["shape"][1] for r in records)
    zero_kernels = sum(r["zero_kernel_ratio"] * r["shape"][0] * r["shape"][1] for r in records)
    index_bits = total(("index", "bits"))
    return {
        "layers": len(records),
        "weights": weights,
        "sparsity_after": 1.0 - nonzero / weights if weights else 0.0,
        "zero_kernel_ratio": zero_kernels / kernels if kernels else 0.0,
        "baseline_cells": base_cells,
        "pattern_cells": pat_cells,
        "waste_cells": total(("pattern", "waste_cells")),
        "baseline_crossbars": total(("baseline", "crossbars")),
        "pattern_crossbars": total(("pattern", "crossbars")),
        "area_efficiency": _ratio(base_cells, pat_cells),
        "baseline_cycles": base_cycles,
        "pattern_cycles": pat_cycles,
        "speedup": _ratio(base_cycles, pat_cycles),
        "baseline_energy_pj": base_e,
        "pattern_energy_pj": pat_e,
        "normalized_energy": _ratio(pat_e, base_e),
        "energy_efficiency": _ratio(base_e, pat_e),
        "index_bits": index_bits,
        "index_bytes": sum(r["index"]["bytes"] for r in records),
        "index_fraction": _ratio(index_bits, pat_cells // hw.cells_per_weight * hw.weight_bits),
    }
