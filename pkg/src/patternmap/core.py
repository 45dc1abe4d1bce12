"""Domain types: layers, kernel patterns, hardware configuration, weight files."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


class PatternMapError(Exception):
    """Base class for all errors raised by this package."""


class WeightFileError(PatternMapError, ValueError):
    pass


_DTYPES = {"f32": np.dtype("<f4"), "i16": np.dtype("<i2")}


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, copy=True)
    array.setflags(write=False)
    return array


def int_range(bits: int) -> tuple[int, int]:
    return -(1 << (bits - 1)), (1 << (bits - 1)) - 1


def quantize_symmetric(values, bits: int = 16) -> np.ndarray:
    """Quantize floats to signed ``bits``-wide integers by max-abs scaling.

    The largest magnitude maps to ``2**(bits-1) - 1``; an all-zero input
    stays zero. Rounding is to nearest, ties to even.
    """
    values = np.asarray(values, dtype=np.float64)
    peak = float(np.max(np.abs(values))) if values.size else 0.0
    if peak == 0.0:
        return np.zeros(values.shape, dtype=np.int64)
    qmax = (1 << (bits - 1)) - 1
    return np.rint(values / peak * qmax).astype(np.int64)


@dataclass(frozen=True, eq=False)
class LayerWeights:
    """Integer weights of one convolution layer, shaped (O, I, Kh, Kw)."""

    name: str
    weights: np.ndarray
    stride: int = 1
    padding: int = 0
    weight_bits: int = 16

    def __post_init__(self):
        w = np.asarray(self.weights)
        if w.ndim != 4:
            raise ValueError(f"layer {self.name!r}: weights must be 4-D (O, I, Kh, Kw), got shape {w.shape}")
        if min(w.shape) <= 0:
            raise ValueError(f"layer {self.name!r}: non-positive dimension in {w.shape}")
        if not np.issubdtype(w.dtype, np.integer):
            if not np.all(np.equal(np.mod(w, 1), 0)):
                raise ValueError(f"layer {self.name!r}: weights must be integers; quantize first")
        w = w.astype(np.int64)
        lo, hi = int_range(self.weight_bits)
        if w.size and (w.min() < lo or w.max() > hi):
            raise ValueError(f"layer {self.name!r}: weights exceed {self.weight_bits}-bit range")
        if self.stride < 1 or self.padding < 0:
            raise ValueError(f"layer {self.name!r}: stride must be >= 1 and padding >= 0")
        object.__setattr__(self, "weights", _frozen(w))

    @property
    def out_channels(self) -> int:
        return self.weights.shape[0]

    @property
    def in_channels(self) -> int:
        return self.weights.shape[1]

    @property
    def kernel_h(self) -> int:
        return self.weights.shape[2]

    @property
    def kernel_w(self) -> int:
        return self.weights.shape[3]

    @property
    def kernel_area(self) -> int:
        return self.kernel_h * self.kernel_w

    @property
    def size(self) -> int:
        return self.weights.size

    def with_weights(self, weights: np.ndarray) -> "LayerWeights":
        return replace(self, weights=weights)

    def output_shape(self, height: int, width: int) -> tuple[int, int]:
        oh = (height + 2 * self.padding - self.kernel_h) // self.stride + 1
        ow = (width + 2 * self.padding - self.kernel_w) // self.stride + 1
        return oh, ow


def sparsity(layer: LayerWeights) -> float:
    """Fraction of zero weights in the layer."""
    return float(np.count_nonzero(layer.weights == 0)) / layer.size


@dataclass(frozen=True)
class Pattern:
    """Boolean support mask of a kernel, row-major."""

    mask: tuple[bool, ...]
    kernel_h: int = 3
    kernel_w: int = 3

    def __post_init__(self):
        mask = tuple(bool(m) for m in self.mask)
        if len(mask) != self.kernel_h * self.kernel_w:
            raise ValueError(f"mask length {len(mask)} != {self.kernel_h}x{self.kernel_w}")
        object.__setattr__(self, "mask", mask)

    @classmethod
    def from_kernel(cls, kernel) -> "Pattern":
        kernel = np.asarray(kernel)
        return cls(tuple((kernel != 0).ravel()), kernel.shape[0], kernel.shape[1])

    @classmethod
    def from_positions(cls, positions: Iterable[tuple[int, int]], kernel_h: int = 3, kernel_w: int = 3) -> "Pattern":
        mask = [False] * (kernel_h * kernel_w)
        for r, c in positions:
            mask[r * kernel_w + c] = True
        return cls(tuple(mask), kernel_h, kernel_w)

    @classmethod
    def zero(cls, kernel_h: int = 3, kernel_w: int = 3) -> "Pattern":
        return cls((False,) * (kernel_h * kernel_w), kernel_h, kernel_w)

    @property
    def size(self) -> int:
        return sum(self.mask)

    @property
    def is_zero(self) -> bool:
        return not any(self.mask)

    @property
    def flat_positions(self) -> tuple[int, ...]:
        """Row-major indexes of the kept positions; also the compressed row order."""
        return tuple(i for i, m in enumerate(self.mask) if m)

    @property
    def positions(self) -> tuple[tuple[int, int], ...]:
        return tuple(divmod(i, self.kernel_w) for i in self.flat_positions)

    def as_array(self) -> np.ndarray:
        return np.array(self.mask, dtype=bool).reshape(self.kernel_h, self.kernel_w)

    def __str__(self) -> str:
        return "".join("1" if m else "0" for m in self.mask)


@dataclass(frozen=True, eq=False)
class PatternAssignment:
    """Per-kernel pattern ids into a per-layer candidate list.

    ``ids[o, i]`` indexes ``candidates`` for the kernel feeding output
    channel ``o`` from input channel ``i``.
    """

    candidates: tuple[Pattern, ...]
    ids: np.ndarray

    def __post_init__(self):
        ids = np.asarray(self.ids, dtype=np.int64)
        if ids.ndim != 2:
            raise ValueError("assignment ids must be 2-D (O, I)")
        if ids.size and (ids.min() < 0 or ids.max() >= len(self.candidates)):
            raise ValueError("assignment id outside candidate list")
        object.__setattr__(self, "candidates", tuple(self.candidates))
        object.__setattr__(self, "ids", _frozen(ids))

    def pattern(self, out_channel: int, in_channel: int) -> Pattern:
        return self.candidates[self.ids[out_channel, in_channel]]

    def masks(self) -> np.ndarray:
        """Boolean (O, I, Kh, Kw) array of every kernel's assigned mask."""
        if not self.candidates:
            return np.zeros(self.ids.shape + (0, 0), dtype=bool)
        table = np.stack([p.as_array() for p in self.candidates])
        return table[self.ids]

    def check(self, layer: LayerWeights) -> None:
        """Raise if any kernel has a nonzero outside its assigned mask."""
        if self.ids.shape != (layer.out_channels, layer.in_channels):
            raise ValueError(f"assignment shape {self.ids.shape} does not match layer {layer.name!r}")
        outside = (layer.weights != 0) & ~self.masks()
        if outside.any():
            o, i = np.argwhere(outside.any(axis=(2, 3)))[0]
            raise ValueError(
                f"layer {layer.name!r}: kernel (out={o}, in={i}) has nonzeros outside its assigned pattern"
            )

    def __eq__(self, other):
        if not isinstance(other, PatternAssignment):
            return NotImplemented
        return self.candidates == other.candidates and np.array_equal(self.ids, other.ids)

    __hash__ = None


def assignment_from_supports(layer: LayerWeights) -> PatternAssignment:
    """Assignment whose candidates are exactly the distinct kernel supports.

    Candidates are ordered by first appearance in (out, in) kernel order.
    """
    kk = layer.kernel_area
    support = (layer.weights != 0).reshape(-1, kk)
    uniq, first, inverse = np.unique(support, axis=0, return_index=True, return_inverse=True)
    order = np.argsort(first, kind="stable")
    rank = np.empty_like(order)
    rank[order] = np.arange(len(order))
    candidates = tuple(Pattern(tuple(uniq[j]), layer.kernel_h, layer.kernel_w) for j in order)
    ids = rank[inverse.ravel()].reshape(layer.out_channels, layer.in_channels)
    return PatternAssignment(candidates, ids)


@dataclass(frozen=True)
class HardwareConfig:
    """Crossbar, OU and peripheral parameters.

    Energies are per operation in picojoules. ``index_bits`` is either an
    explicit width or ``"auto"`` for ``ceil(log2(O))``.
    """

    ou_rows: int = 9
    ou_cols: int = 8
    crossbar_rows: int = 512
    crossbar_cols: int = 512
    bits_per_cell: int = 4
    weight_bits: int = 16
    cells_per_weight: int = 1
    e_adc_pj: float = 1.67
    e_dac_pj: float = 0.0182
    e_ou_pj: float = 4.8
    index_bits: int | str = "auto"
    skip_zero_inputs: bool = True
    skip_saves_cycles: bool = True
    baseline_skip_zero_inputs: bool = False
    ou_energy: str = "flat"

    def __post_init__(self):
        counts = ("ou_rows", "ou_cols", "crossbar_rows", "crossbar_cols", "bits_per_cell", "weight_bits", "cells_per_weight")
        for name in counts:
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be positive")
        for name in ("e_adc_pj", "e_dac_pj", "e_ou_pj"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.ou_rows > self.crossbar_rows or self.ou_cols > self.crossbar_cols:
            raise ValueError("OU must fit inside a crossbar")
        if self.index_bits != "auto" and (not isinstance(self.index_bits, int) or self.index_bits < 1):
            raise ValueError("index_bits must be 'auto' or a positive int")
        if self.ou_energy not in ("flat", "linear"):
            raise ValueError("ou_energy must be 'flat' or 'linear'")

    def resolve_index_bits(self, out_channels: int) -> int:
        if self.index_bits == "auto":
            # one bit minimum so a single-output layer still has a stored index
            return max(1, math.ceil(math.log2(out_channels)))
        return int(self.index_bits)


# -- weight / feature-map files ---------------------------------------------


def _read_manifest(manifest_path) -> tuple[dict, Path, bytes]:
    path = Path(manifest_path)
    if not path.is_file():
        raise WeightFileError(f"manifest not found: {path}")
    with open(path) as fh:
        manifest = json.load(fh)
    if "blob" not in manifest:
        raise WeightFileError(f"{path}: manifest has no 'blob' entry")
    blob_path = path.parent / manifest["blob"]
    if not blob_path.is_file():
        raise WeightFileError(f"blob not found: {blob_path}")
    return manifest, blob_path, blob_path.read_bytes()


def _read_values(blob: bytes, entry: dict, count: int, bits: int, what: str) -> np.ndarray:
    tag = entry.get("dtype")
    if tag not in _DTYPES:
        raise WeightFileError(f"{what}: unsupported dtype tag {tag!r}")
    dtype = _DTYPES[tag]
    offset = int(entry.get("offset_bytes", 0))
    nbytes = count * dtype.itemsize
    if offset < 0 or offset + nbytes > len(blob):
        raise WeightFileError(
            f"{what}: blob length mismatch (need {nbytes} bytes at offset {offset}, blob has {len(blob)})"
        )
    values = np.frombuffer(blob, dtype=dtype, count=count, offset=offset)
    if tag == "f32":
        return quantize_symmetric(values, bits)
    return values.astype(np.int64)


def _positive(entry: dict, keys: Sequence[str], what: str) -> list[int]:
    dims = []
    for key in keys:
        if key not in entry:
            raise WeightFileError(f"{what}: missing field {key!r}")
        value = int(entry[key])
        if value <= 0:
            raise WeightFileError(f"{what}: non-positive dimension {key}={value}")
        dims.append(value)
    return dims


def load_weights(manifest_path, weight_bits: int = 16) -> list[LayerWeights]:
    """Read every layer listed in a weight manifest, in manifest order.

    ``f32`` blobs are quantized per layer with :func:`quantize_symmetric`;
    ``i16`` blobs are taken as-is.
    """
    manifest, _, blob = _read_manifest(manifest_path)
    layers = []
    for n, entry in enumerate(manifest.get("layers", [])):
        name = entry.get("name", f"layer{n}")
        o, i, kh, kw = _positive(entry, ("out_channels", "in_channels", "kernel_h", "kernel_w"), name)
        values = _read_values(blob, entry, o * i * kh * kw, weight_bits, name)
        stride = int(entry.get("stride", 1))
        padding = int(entry.get("padding", 0))
        if stride <= 0:
            raise WeightFileError(f"{name}: non-positive dimension stride={stride}")
        layers.append(
            LayerWeights(name, values.reshape(o, i, kh, kw), stride=stride, padding=padding, weight_bits=weight_bits)
        )
    return layers


def save_weights(layers: Sequence[LayerWeights], manifest_path, blob_name: str = "weights.bin") -> Path:
    """Write layers as an ``i16`` blob plus manifest; inverse of :func:`load_weights`."""
    path = Path(manifest_path)
    path.parent.mkdir(parents=True, exist_ok=True)
    entries, chunks, offset = [], [], 0
    for layer in layers:
        if layer.weight_bits > 16:
            raise WeightFileError(f"{layer.name}: cannot store {layer.weight_bits}-bit weights as i16")
        data = layer.weights.astype("<i2").tobytes()
        entries.append(
            {
                "name": layer.name,
                "out_channels": layer.out_channels,
                "in_channels": layer.in_channels,
                "kernel_h": layer.kernel_h,
                "kernel_w": layer.kernel_w,
                "stride": layer.stride,
                "padding": layer.padding,
                "dtype": "i16",
                "offset_bytes": offset,
            }
        )
        chunks.append(data)
        offset += len(data)
    (path.parent / blob_name).write_bytes(b"".join(chunks))
    path.write_text(json.dumps({"layers": entries, "blob": blob_name}, indent=2) + "\n")
    return path


@dataclass(frozen=True, eq=False)
class FeatureMap:
    name: str
    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 3:
            raise ValueError(f"feature map {self.name!r} must be C x H x W")
        object.__setattr__(self, "data", _frozen(data.astype(np.int64)))


def load_feature_maps(manifest_path, bits: int = 16) -> dict[str, FeatureMap]:
    """Read the ``inputs`` section of a manifest (N=1, C x H x W maps), keyed by name."""
    manifest, _, blob = _read_manifest(manifest_path)
    maps = {}
    for n, entry in enumerate(manifest.get("inputs", [])):
        name = entry.get("name", f"input{n}")
        c, h, w = _positive(entry, ("channels", "height", "width"), name)
        values = _read_values(blob, entry, c * h * w, bits, name)
        maps[name] = FeatureMap(name, values.reshape(c, h, w))
    return maps


def save_feature_maps(maps: Sequence[FeatureMap], manifest_path, blob_name: str = "inputs.bin") -> Path:
    path = Path(manifest_path)
    path.parent.mkdir(parents=True, exist_ok=True)
    entries, chunks, offset = [], [], 0
    for fmap in maps:
        data = fmap.data.astype("<i2").tobytes()
        c, h, w = fmap.data.shape
        entries.append(
            {"name": fmap.name, "channels": c, "height": h, "width": w, "dtype": "i16", "offset_bytes": offset}
        )
        chunks.append(data)
        offset += len(data)
    (path.parent / blob_name).write_bytes(b"".join(chunks))
    path.write_text(json.dumps({"inputs": entries, "blob": blob_name}, indent=2) + "\n")
    return path
