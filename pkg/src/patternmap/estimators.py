"""scikit-learn style front ends for pruning, mapping and simulation.

``PatternPruner`` is a transformer over a layer's (O, I, Kh, Kw) weight
tensor; ``PatternMapper`` and ``BaselineMapper`` are fitted on weights and
``predict`` runs a (C, H, W) feature map through the simulated crossbars.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .core import HardwareConfig, LayerWeights, assignment_from_supports
from .energy import energy_of
from .mapping import baseline_map, map_layer
from .pruning import extract_histogram, magnitude_prune, prune_layer, select_candidates
from .simulator import run_baseline_layer, run_layer


def check_layer(X, stride: int = 1, padding: int = 0, name: str = "layer") -> LayerWeights:
    """Coerce a LayerWeights or a 4-D integer array into a LayerWeights."""
    if isinstance(X, LayerWeights):
        return X
    arr = check_array(X, allow_nd=True, dtype=None, ensure_2d=False)
    if arr.ndim != 4:
        raise ValueError(f"expected a 4-D (O, I, Kh, Kw) weight array, got shape {arr.shape}")
    return LayerWeights(name, arr, stride=stride, padding=padding)


def check_feature_map(X, in_channels: int) -> np.ndarray:
    arr = check_array(X, allow_nd=True, dtype=None, ensure_2d=False)
    if arr.ndim != 3 or arr.shape[0] != in_channels:
        raise ValueError(f"expected a ({in_channels}, H, W) feature map, got shape {arr.shape}")
    if not np.issubdtype(arr.dtype, np.integer):
        raise ValueError("feature map must be integer valued; quantize first")
    return arr


def _like(X, layer: LayerWeights):
    return layer if isinstance(X, LayerWeights) else layer.weights


class PatternPruner(TransformerMixin, BaseEstimator):
    """Learn per-layer candidate patterns and project kernels onto them.

    Parameters
    ----------
    budget : int
        Number of candidate patterns kept from the histogram.
    metric : {"hamming", "cosine"}
        Kernel-to-pattern distance used for projection.
    include_zero : bool
        Always offer the all-zero pattern as a candidate.
    target_sparsity : float or None
        Magnitude-prune to this sparsity before extracting patterns.
    regrow : bool
        When magnitude pruning is applied, take the values kept inside each
        chosen mask from the unpruned weights instead of the pruned ones.

    Attributes
    ----------
    histogram_ : PatternHistogram
    candidates_ : list of Pattern
    """

    def __init__(self, budget=8, metric="hamming", include_zero=True, target_sparsity=None, regrow=True):
        self.budget = budget
        self.metric = metric
        self.include_zero = include_zero
        self.target_sparsity = target_sparsity
        self.regrow = regrow

    def _irregular(self, layer):
        if self.target_sparsity:
            return magnitude_prune(layer, self.target_sparsity)
        return layer

    def fit(self, X, y=None):
        layer = check_layer(X)
        self.histogram_ = extract_histogram(self._irregular(layer))
        self.candidates_ = select_candidates(self.histogram_, self.budget, self.include_zero)
        self.kernel_shape_ = (layer.kernel_h, layer.kernel_w)
        return self

    def project(self, X):
        """Return the projected layer and its PatternAssignment."""
        check_is_fitted(self, "candidates_")
        layer = check_layer(X)
        if (layer.kernel_h, layer.kernel_w) != self.kernel_shape_:
            raise ValueError(f"kernel shape {layer.kernel_h}x{layer.kernel_w} differs from fitted {self.kernel_shape_}")
        pruned = self._irregular(layer)
        retain = layer if (self.regrow and pruned is not layer) else None
        return prune_layer(pruned, self.budget, self.metric, candidates=self.candidates_, retain_from=retain)

    def transform(self, X):
        projected, _ = self.project(X)
        return _like(X, projected)


class _MapperBase(BaseEstimator):
    def __init__(
        self,
        ou_rows=9,
        ou_cols=8,
        crossbar_rows=512,
        crossbar_cols=512,
        cells_per_weight=1,
        index_bits="auto",
        skip_zero_inputs=True,
        skip_saves_cycles=True,
        ou_energy="flat",
        stride=1,
        padding=0,
    ):
        self.ou_rows = ou_rows
        self.ou_cols = ou_cols
        self.crossbar_rows = crossbar_rows
        self.crossbar_cols = crossbar_cols
        self.cells_per_weight = cells_per_weight
        self.index_bits = index_bits
        self.skip_zero_inputs = skip_zero_inputs
        self.skip_saves_cycles = skip_saves_cycles
        self.ou_energy = ou_energy
        self.stride = stride
        self.padding = padding

    @property
    def hardware(self) -> HardwareConfig:
        return HardwareConfig(
            ou_rows=self.ou_rows,
            ou_cols=self.ou_cols,
            crossbar_rows=self.crossbar_rows,
            crossbar_cols=self.crossbar_cols,
            cells_per_weight=self.cells_per_weight,
            index_bits=self.index_bits,
            skip_zero_inputs=self.skip_zero_inputs,
            skip_saves_cycles=self.skip_saves_cycles,
            baseline_skip_zero_inputs=self.skip_zero_inputs,
            ou_energy=self.ou_energy,
        )

    def predict(self, X):
        return self.simulate(X)[0]

    def energy(self, X):
        _, stats = self.simulate(X)
        return energy_of(stats, self.hardware)


class PatternMapper(_MapperBase):
    """Map a pattern-pruned layer onto crossbars and simulate it.

    ``fit`` takes the projected weights and, optionally, the assignment that
    produced them; without one, every distinct kernel support becomes its
    own pattern.

    Attributes
    ----------
    layer_, assignment_, placement_, index_stream_
    """

    def fit(self, X, y=None, assignment=None):
        hw = self.hardware
        self.layer_ = check_layer(X, self.stride, self.padding)
        self.assignment_ = assignment if assignment is not None else assignment_from_supports(self.layer_)
        self.placement_, self.index_stream_ = map_layer(self.layer_, self.assignment_, hw)
        self.area_cells_ = self.placement_.area_cells(hw)
        return self

    def simulate(self, X):
        check_is_fitted(self, "placement_")
        x = check_feature_map(X, self.layer_.in_channels)
        return run_layer(self.layer_, self.assignment_, self.placement_, self.index_stream_, x, self.hardware)


class BaselineMapper(_MapperBase):
    """Dense one-filter-per-column mapping.

    Zero-input skipping follows ``skip_zero_inputs`` here too, but defaults
    to off for the baseline.
    """

    def __init__(self, ou_rows=9, ou_cols=8, crossbar_rows=512, crossbar_cols=512, cells_per_weight=1,
                 index_bits="auto", skip_zero_inputs=False, skip_saves_cycles=True, ou_energy="flat",
                 stride=1, padding=0):
        super().__init__(ou_rows, ou_cols, crossbar_rows, crossbar_cols, cells_per_weight, index_bits,
                         skip_zero_inputs, skip_saves_cycles, ou_energy, stride, padding)

    def fit(self, X, y=None):
        self.layer_ = check_layer(X, self.stride, self.padding)
        self.placement_ = baseline_map(self.layer_, self.hardware)
        self.area_cells_ = self.placement_.area_cells(self.hardware)
        return self

    def simulate(self, X):
        check_is_fitted(self, "placement_")
        x = check_feature_map(X, self.layer_.in_channels)
        return run_baseline_layer(self.layer_, x, self.hardware)
