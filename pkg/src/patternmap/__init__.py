"""Pattern-pruned weight mapping and OU-level simulation for RRAM crossbar CNN accelerators."""

from .core import (
    FeatureMap,
    HardwareConfig,
    LayerWeights,
    Pattern,
    PatternAssignment,
    PatternMapError,
    load_feature_maps,
    load_weights,
    save_feature_maps,
    save_weights,
    sparsity,
)
from .energy import EnergyStats, compare, energy_of
from .estimators import BaselineMapper, PatternMapper, PatternPruner
from .mapping import (
    IndexStream,
    Placement,
    baseline_map,
    emit_index_stream,
    index_overhead_bits,
    map_layer,
    pack_blocks,
    reconstruct_placement,
    reorder_and_compress,
)
from .pruning import extract_histogram, magnitude_prune, project_kernel, prune_layer, select_candidates
from .simulator import CycleStats, run_baseline_layer, run_layer, select_inputs, tile_blocks, zero_detect

__version__ = "0.1.0"
