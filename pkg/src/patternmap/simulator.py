"""OU-granular execution of mapped layers.

Crossbars are programmed from a placement, inputs are gathered per pattern,
each OU tile fires unless its input slice is all zero, and bitline partial
sums are routed back to output channels through the index stream.
Arithmetic is exact integer (ideal ADC).
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from .core import HardwareConfig, LayerWeights, Pattern, PatternAssignment, PatternMapError
from .mapping import IndexStream, Placement, reconstruct_placement


class SimulationError(PatternMapError):
    pass


@dataclass(frozen=True)
class OUTile:
    entry: int  # index into Placement.entries
    crossbar: int
    row0: int  # first pattern row of the block covered
    rows: int
    col0: int  # first column of the piece covered
    cols: int


@dataclass
class CycleStats:
    ou_activations: int = 0
    skipped_ou_activations: int = 0
    adc_conversions: int = 0
    dac_conversions: int = 0
    activated_cells: int = 0
    cycles: int = 0

    def __add__(self, other: "CycleStats") -> "CycleStats":
        return CycleStats(*(getattr(self, f.name) + getattr(other, f.name) for f in fields(self)))

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def tile_blocks(placement: Placement, hw: HardwareConfig) -> list[OUTile]:
    """Cut every placed block piece into OU-sized tiles, row-major."""
    tiles = []
    for n, e in enumerate(placement.entries):
        for r in range(0, e.height, hw.ou_rows):
            for c in range(0, e.width, hw.ou_cols):
                tiles.append(OUTile(n, e.crossbar, r, min(hw.ou_rows, e.height - r), c, min(hw.ou_cols, e.width - c)))
    return tiles


def pad_input(feature_map: np.ndarray, padding: int) -> np.ndarray:
    x = np.asarray(feature_map, dtype=np.int64)
    if padding:
        x = np.pad(x, ((0, 0), (padding, padding), (padding, padding)))
    return x


def select_inputs(padded: np.ndarray, window: tuple[int, int], in_channel: int, pattern: Pattern) -> np.ndarray:
    """Activations under the pattern's kept positions for one window, row-major."""
    r0, c0 = window
    _, h, w = padded.shape
    if r0 < 0 or c0 < 0 or r0 + pattern.kernel_h > h or c0 + pattern.kernel_w > w:
        raise SimulationError(f"window {window} outside padded map of {h}x{w}")
    return np.array([padded[in_channel, r0 + r, c0 + c] for r, c in pattern.positions], dtype=np.int64)


def zero_detect(vector) -> bool:
    return not np.any(vector)


def im2col(padded: np.ndarray, kernel_h: int, kernel_w: int, stride: int) -> tuple[np.ndarray, int, int]:
    """(C, Kh*Kw, P) windows with positions flattened row-major."""
    c, h, w = padded.shape
    oh = (h - kernel_h) // stride + 1
    ow = (w - kernel_w) // stride + 1
    if oh <= 0 or ow <= 0:
        raise SimulationError(f"input {h}x{w} (padded) smaller than kernel {kernel_h}x{kernel_w}")
    view = np.lib.stride_tricks.sliding_window_view(padded, (kernel_h, kernel_w), axis=(1, 2))
    view = view[:, ::stride, ::stride][:, :oh, :ow]
    cols = view.reshape(c, oh * ow, kernel_h * kernel_w).transpose(0, 2, 1)
    return np.ascontiguousarray(cols), oh, ow


def _check_input(layer: LayerWeights, feature_map) -> np.ndarray:
    x = np.asarray(feature_map)
    if x.ndim != 3 or x.shape[0] != layer.in_channels:
        raise SimulationError(f"input shape {x.shape} does not match layer {layer.name!r} with I={layer.in_channels}")
    return x


def _finish(stats: CycleStats, hw: HardwareConfig) -> CycleStats:
    stats.cycles = stats.ou_activations + (0 if hw.skip_saves_cycles else stats.skipped_ou_activations)
    return stats


def program_crossbars(layer: LayerWeights, placement: Placement, hw: HardwareConfig) -> np.ndarray:
    """Write compressed weights into crossbar cell arrays, shape (n, rows, cols)."""
    xbars = np.zeros((placement.crossbars_used, hw.crossbar_rows, hw.crossbar_cols), dtype=np.int32)
    for e in placement.entries:
        rows = list(e.pattern.flat_positions)
        kernels = layer.weights[list(e.kernel_order), e.in_channel].reshape(e.width, -1)
        xbars[e.crossbar, e.row : e.row + e.height, e.col : e.col + e.width] = kernels[:, rows].T
    return xbars


def _fire(stats, out, vec, weights, outputs, skip):
    """One OU tile across all output positions; ``vec`` is (rows, P)."""
    p = vec.shape[1]
    if skip:
        active = np.flatnonzero(vec.any(axis=0))
    else:
        active = np.arange(p)
    n = active.size
    rows, cols = weights.shape
    stats.ou_activations += n
    stats.skipped_ou_activations += p - n
    stats.adc_conversions += cols * n
    stats.dac_conversions += rows * n
    stats.activated_cells += rows * cols * n
    if n:
        out[np.ix_(outputs, active)] += weights.T.astype(np.int64) @ vec[:, active]


def run_layer(
    layer: LayerWeights,
    assignment: PatternAssignment,
    placement: Placement,
    stream: IndexStream | bytes,
    feature_map,
    hw: HardwareConfig,
) -> tuple[np.ndarray, CycleStats]:
    """Execute a pattern-mapped layer; returns (O, Ho, Wo) outputs and counts."""
    x = _check_input(layer, feature_map)
    assignment.check(layer)
    if isinstance(stream, (bytes, bytearray)):
        stream = IndexStream.from_bytes(bytes(stream))
    if reconstruct_placement(stream, hw) != placement:
        raise SimulationError("index stream does not reproduce the placement")
    if (placement.out_channels, placement.in_channels) != (layer.out_channels, layer.in_channels):
        raise SimulationError("placement dimensions do not match layer")
    xbars = program_crossbars(layer, placement, hw)
    cols, oh, ow = im2col(pad_input(x, layer.padding), layer.kernel_h, layer.kernel_w, layer.stride)
    out = np.zeros((layer.out_channels, oh * ow), dtype=np.int64)
    stats = CycleStats()
    # entries are already in channel-ascending, placement order
    for tile in tile_blocks(placement, hw):
        e = placement.entries[tile.entry]
        rows = list(e.pattern.flat_positions[tile.row0 : tile.row0 + tile.rows])
        vec = cols[e.in_channel, rows]
        r = e.row + tile.row0
        c = e.col + tile.col0
        weights = xbars[e.crossbar, r : r + tile.rows, c : c + tile.cols]
        outputs = list(e.kernel_order[tile.col0 : tile.col0 + tile.cols])
        _fire(stats, out, vec, weights, outputs, hw.skip_zero_inputs)
    return out.reshape(layer.out_channels, oh, ow), _finish(stats, hw)


def baseline_tiles(rows: int, cols: int, hw: HardwareConfig) -> list[tuple[int, int, int, int]]:
    """(row0, nrows, col0, ncols) OU tiles of a dense rows x cols matrix, never crossing a crossbar edge."""
    def spans(total, xbar, ou):
        out = []
        for start in range(0, total, xbar):
            end = min(total, start + xbar)
            out.extend((s, min(ou, end - s)) for s in range(start, end, ou))
        return out

    return [
        (r, nr, c, nc)
        for r, nr in spans(rows, hw.crossbar_rows, hw.ou_rows)
        for c, nc in spans(cols, hw.crossbar_cols, hw.ou_cols)
    ]


def run_baseline_layer(layer: LayerWeights, feature_map, hw: HardwareConfig) -> tuple[np.ndarray, CycleStats]:
    """Execute the dense one-filter-per-column mapping at OU granularity."""
    x = _check_input(layer, feature_map)
    cols, oh, ow = im2col(pad_input(x, layer.padding), layer.kernel_h, layer.kernel_w, layer.stride)
    inputs = cols.reshape(-1, oh * ow)  # rows ordered (in_channel, kernel position)
    matrix = layer.weights.reshape(layer.out_channels, -1).T
    out = np.zeros((layer.out_channels, oh * ow), dtype=np.int64)
    stats = CycleStats()
    for r, nr, c, nc in baseline_tiles(*matrix.shape, hw):
        _fire(stats, out, inputs[r : r + nr], matrix[r : r + nr, c : c + nc], list(range(c, c + nc)), hw.baseline_skip_zero_inputs)
    return out.reshape(layer.out_channels, oh, ow), _finish(stats, hw)
