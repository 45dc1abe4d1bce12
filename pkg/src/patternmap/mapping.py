"""Kernel-reordering crossbar mapping and the dense baseline mapping.

Per input channel, kernels sharing a pattern are gathered into a compressed
block (rows = kept kernel positions, columns = kernels). Blocks are packed
into a channel strip in column groups, strips are stacked down the
crossbars, and an index stream records enough to rebuild the placement.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .core import HardwareConfig, LayerWeights, Pattern, PatternAssignment, PatternMapError


class MappingError(PatternMapError):
    pass


class StreamError(PatternMapError, ValueError):
    pass


@dataclass(frozen=True)
class PatternBlock:
    in_channel: int
    pattern: Pattern
    kernel_order: tuple[int, ...]

    @property
    def height(self) -> int:
        return self.pattern.size

    @property
    def width(self) -> int:
        return len(self.kernel_order)

    @property
    def area(self) -> int:
        return self.height * self.width


@dataclass(frozen=True)
class Strip:
    """Packed blocks of one input channel, origins relative to the strip corner."""

    in_channel: int
    height: int
    width: int
    blocks: tuple[PatternBlock, ...]
    origins: tuple[tuple[int, int], ...]
    wasted_cells: int

    @property
    def payload_cells(self) -> int:
        return sum(b.area for b in self.blocks)


@dataclass(frozen=True)
class BlockPlacement:
    """One crossbar-resident piece of a block.

    A block wider than the space left in its crossbar is split by whole
    columns; each piece gets its own entry with ``piece`` counting up.
    """

    in_channel: int
    pattern: Pattern
    kernel_order: tuple[int, ...]
    crossbar: int
    row: int
    col: int
    piece: int = 0

    @property
    def height(self) -> int:
        return self.pattern.size

    @property
    def width(self) -> int:
        return len(self.kernel_order)


@dataclass(frozen=True)
class Placement:
    out_channels: int
    in_channels: int
    kernel_h: int
    kernel_w: int
    blocks: tuple[PatternBlock, ...]
    entries: tuple[BlockPlacement, ...]
    # per input channel: (crossbar id of the band's first crossbar, row offset, strip height, strip width)
    strips: tuple[tuple[int, int, int, int], ...]
    payload_cells: int
    wasted_cells: int
    crossbars_used: int

    @property
    def total_cells_used(self) -> int:
        return self.payload_cells + self.wasted_cells

    def area_cells(self, hw: HardwareConfig) -> int:
        return self.total_cells_used * hw.cells_per_weight

    def area_crossbars(self, hw: HardwareConfig) -> int:
        return self.crossbars_used * hw.cells_per_weight

    def to_json(self) -> str:
        def enc(obj):
            if isinstance(obj, Pattern):
                return str(obj)
            raise TypeError(type(obj))

        return json.dumps(asdict(self), default=enc)


@dataclass(frozen=True)
class BaselinePlacement:
    rows: int
    cols: int
    row_bands: int
    col_bands: int

    @property
    def crossbars_used(self) -> int:
        return self.row_bands * self.col_bands

    @property
    def cells(self) -> int:
        return self.rows * self.cols

    def area_cells(self, hw: HardwareConfig) -> int:
        return self.cells * hw.cells_per_weight

    def area_crossbars(self, hw: HardwareConfig) -> int:
        return self.crossbars_used * hw.cells_per_weight


# -- per-channel compression and packing -------------------------------------


def reorder_and_compress(layer: LayerWeights, assignment: PatternAssignment, in_channel: int) -> list[PatternBlock]:
    """Gather the channel's kernels by pattern; all-zero kernels are dropped.

    Blocks come out in candidate order; kernels inside a block are in
    ascending output-channel order.
    """
    ids = assignment.ids[:, in_channel]
    kernels = layer.weights[:, in_channel]
    blocks = []
    for pid, pattern in enumerate(assignment.candidates):
        members = np.flatnonzero(ids == pid)
        if members.size == 0:
            continue
        outside = (kernels[members] != 0) & ~pattern.as_array()
        if outside.any():
            bad = int(members[np.argwhere(outside.any(axis=(1, 2)))[0, 0]])
            raise MappingError(
                f"kernel (out={bad}, in={in_channel}) has nonzeros outside its assigned pattern {pattern}"
            )
        if pattern.is_zero:
            continue
        blocks.append(PatternBlock(in_channel, pattern, tuple(int(m) for m in members)))
    return blocks


def placement_order(blocks: Sequence[PatternBlock]) -> list[PatternBlock]:
    return sorted(blocks, key=lambda b: (-b.height, -b.width, b.pattern.mask))


def pack_shapes(shapes: Sequence[tuple[int, int]]) -> tuple[list[tuple[int, int]], int, int, int]:
    """Place (height, width) rectangles in the given order.

    The first rectangle fixes the strip height. Each rectangle goes directly
    below the previous one in the current column group when enough rows
    remain, otherwise it opens a new group to the right. Returns origins,
    strip height, strip width and wasted cells.
    """
    if not shapes:
        return [], 0, 0, 0
    strip_h = shapes[0][0]
    origins = []
    group_col, group_w, used = 0, 0, strip_h  # forces a fresh group on the first shape
    for h, w in shapes:
        if h > strip_h:
            raise MappingError(f"block height {h} exceeds strip height {strip_h}; blocks out of order")
        if strip_h - used >= h and group_w > 0:
            origins.append((used, group_col))
            used += h
            group_w = max(group_w, w)
        else:
            group_col += group_w
            origins.append((0, group_col))
            used, group_w = h, w
    strip_w = group_col + group_w
    waste = strip_h * strip_w - sum(h * w for h, w in shapes)
    return origins, strip_h, strip_w, waste


def pack_blocks(blocks: Sequence[PatternBlock], in_channel: int | None = None) -> Strip:
    ordered = placement_order(blocks)
    origins, h, w, waste = pack_shapes([(b.height, b.width) for b in ordered])
    if in_channel is None:
        in_channel = ordered[0].in_channel if ordered else 0
    return Strip(in_channel, h, w, tuple(ordered), tuple(origins), waste)


# -- layer mapping ----------------------------------------------------------


def _layout(strips: Sequence[Strip], hw: HardwareConfig, shape: tuple[int, int, int, int]) -> Placement:
    """Stack channel strips down crossbar row bands; split blocks at crossbar column edges."""
    out_ch, in_ch, kh, kw = shape
    rows, cols = hw.crossbar_rows, hw.crossbar_cols
    band_base, band_row, band_width = 0, 0, 0
    entries, strip_info, blocks = [], [], []
    payload = waste = 0
    for strip in strips:
        if strip.height == 0:
            strip_info.append((band_base, band_row, 0, 0))
            continue
        if strip.height > rows:
            raise MappingError(f"pattern height {strip.height} exceeds crossbar rows {rows}")
        if band_row + strip.height > rows:
            band_base += band_width
            band_row, band_width = 0, 0
        strip_info.append((band_base, band_row, strip.height, strip.width))
        for block, (r, c) in zip(strip.blocks, strip.origins):
            blocks.append(block)
            done, piece = 0, 0
            while done < block.width:
                col = c + done
                tile, local = divmod(col, cols)
                take = min(block.width - done, cols - local)
                entries.append(
                    BlockPlacement(
                        block.in_channel,
                        block.pattern,
                        block.kernel_order[done : done + take],
                        band_base + tile,
                        band_row + r,
                        local,
                        piece,
                    )
                )
                done += take
                piece += 1
        band_width = max(band_width, math.ceil(strip.width / cols))
        band_row += strip.height
        payload += strip.payload_cells
        waste += strip.wasted_cells
    return Placement(
        out_ch,
        in_ch,
        kh,
        kw,
        tuple(blocks),
        tuple(entries),
        tuple(strip_info),
        payload,
        waste,
        band_base + band_width,
    )


def map_layer(layer: LayerWeights, assignment: PatternAssignment, hw: HardwareConfig) -> tuple[Placement, "IndexStream"]:
    assignment.check(layer)
    strips = [
        pack_blocks(reorder_and_compress(layer, assignment, c), in_channel=c) for c in range(layer.in_channels)
    ]
    shape = (layer.out_channels, layer.in_channels, layer.kernel_h, layer.kernel_w)
    placement = _layout(strips, hw, shape)
    return placement, emit_index_stream(placement, hw)


def baseline_map(layer: LayerWeights, hw: HardwareConfig) -> BaselinePlacement:
    """Dense mapping: one column per filter, K*K*I rows, tiled over crossbars."""
    rows = layer.kernel_area * layer.in_channels
    cols = layer.out_channels
    return BaselinePlacement(rows, cols, math.ceil(rows / hw.crossbar_rows), math.ceil(cols / hw.crossbar_cols))


# -- index stream -----------------------------------------------------------

HEADER_FIXED_BITS = 16 + 16 + 8 + 8 + 8  # O, I, Kh, Kw, index width
CHANNEL_COUNT_BITS = 16
KERNEL_COUNT_BITS = 16


@dataclass(frozen=True)
class IndexRecord:
    in_channel: int
    pattern: Pattern
    out_channels: tuple[int, ...]


@dataclass(frozen=True)
class IndexStream:
    """Per-layer kernel indexes in placement order.

    Wire format, MSB first: header ``O:16 I:16 Kh:8 Kw:8 index_bits:8``,
    then one 16-bit record count per input channel, then per record the
    mask (Kh*Kw bits), a 16-bit kernel count and that many output-channel
    indexes of ``index_bits`` each. Zero padding fills the last byte.
    """

    out_channels: int
    in_channels: int
    kernel_h: int
    kernel_w: int
    index_bits: int
    records: tuple[IndexRecord, ...]

    @property
    def header_bits(self) -> int:
        return HEADER_FIXED_BITS + CHANNEL_COUNT_BITS * self.in_channels

    @property
    def bit_length(self) -> int:
        kk = self.kernel_h * self.kernel_w
        body = sum(kk + KERNEL_COUNT_BITS + len(r.out_channels) * self.index_bits for r in self.records)
        return self.header_bits + body

    def channel_counts(self) -> list[int]:
        counts = [0] * self.in_channels
        for r in self.records:
            counts[r.in_channel] += 1
        return counts

    def to_bytes(self) -> bytes:
        bits = _BitWriter()
        for value, width in (
            (self.out_channels, 16),
            (self.in_channels, 16),
            (self.kernel_h, 8),
            (self.kernel_w, 8),
            (self.index_bits, 8),
        ):
            bits.write(value, width)
        for n in self.channel_counts():
            bits.write(n, CHANNEL_COUNT_BITS)
        last = -1
        for r in self.records:
            if r.in_channel < last:
                raise StreamError("records must be grouped by ascending input channel")
            last = r.in_channel
            for m in r.pattern.mask:
                bits.write(int(m), 1)
            bits.write(len(r.out_channels), KERNEL_COUNT_BITS)
            for o in r.out_channels:
                if not 0 <= o < self.out_channels:
                    raise StreamError(f"output index {o} out of range for O={self.out_channels}")
                bits.write(o, self.index_bits)
        assert bits.length == self.bit_length
        return bits.getvalue()

    @classmethod
    def from_bytes(cls, data: bytes) -> "IndexStream":
        bits = _BitReader(data)
        out_ch, in_ch = bits.read(16), bits.read(16)
        kh, kw, width = bits.read(8), bits.read(8), bits.read(8)
        if min(out_ch, in_ch, kh, kw) == 0:
            raise StreamError("malformed stream header")
        counts = [bits.read(CHANNEL_COUNT_BITS) for _ in range(in_ch)]
        records = []
        for ch, n in enumerate(counts):
            for _ in range(n):
                mask = tuple(bool(bits.read(1)) for _ in range(kh * kw))
                count = bits.read(KERNEL_COUNT_BITS)
                outs = tuple(bits.read(width) for _ in range(count))
                if any(o >= out_ch for o in outs):
                    raise StreamError(f"output index >= O={out_ch} in channel {ch}")
                records.append(IndexRecord(ch, Pattern(mask, kh, kw), outs))
        if len(data) * 8 - bits.position >= 8:
            raise StreamError("trailing bytes after last record")
        return cls(out_ch, in_ch, kh, kw, width, tuple(records))


class _BitWriter:
    def __init__(self):
        self._value = 0
        self.length = 0

    def write(self, value: int, width: int) -> None:
        if value < 0 or value >= (1 << width) and width > 0:
            raise StreamError(f"value {value} does not fit in {width} bits")
        self._value = (self._value << width) | value
        self.length += width

    def getvalue(self) -> bytes:
        pad = -self.length % 8
        return (self._value << pad).to_bytes((self.length + pad) // 8, "big")


class _BitReader:
    def __init__(self, data: bytes):
        self._value = int.from_bytes(data, "big")
        self._total = len(data) * 8
        self.position = 0

    def read(self, width: int) -> int:
        if self.position + width > self._total:
            raise StreamError("truncated index stream")
        shift = self._total - self.position - width
        self.position += width
        return (self._value >> shift) & ((1 << width) - 1)


def emit_index_stream(placement: Placement, hw: HardwareConfig) -> IndexStream:
    width = hw.resolve_index_bits(placement.out_channels)
    if placement.out_channels > (1 << width):
        raise MappingError(f"index_bits={width} cannot address {placement.out_channels} output channels")
    records = tuple(IndexRecord(b.in_channel, b.pattern, b.kernel_order) for b in placement.blocks)
    return IndexStream(
        placement.out_channels, placement.in_channels, placement.kernel_h, placement.kernel_w, width, records
    )


def reconstruct_placement(stream: IndexStream | bytes, hw: HardwareConfig) -> Placement:
    """Rebuild a placement from pattern sizes, kernel counts and record order only."""
    if isinstance(stream, (bytes, bytearray)):
        stream = IndexStream.from_bytes(bytes(stream))
    per_channel: list[list[PatternBlock]] = [[] for _ in range(stream.in_channels)]
    for r in stream.records:
        if not 0 <= r.in_channel < stream.in_channels:
            raise StreamError(f"record for input channel {r.in_channel} outside I={stream.in_channels}")
        if any(not 0 <= o < stream.out_channels for o in r.out_channels):
            raise StreamError(f"output index >= O={stream.out_channels}")
        if r.pattern.is_zero or not r.out_channels:
            raise StreamError("record with empty pattern or no kernels")
        per_channel[r.in_channel].append(PatternBlock(r.in_channel, r.pattern, r.out_channels))
    strips = []
    for ch, blocks in enumerate(per_channel):
        origins, h, w, waste = pack_shapes([(b.height, b.width) for b in blocks])
        strips.append(Strip(ch, h, w, tuple(blocks), tuple(origins), waste))
    shape = (stream.out_channels, stream.in_channels, stream.kernel_h, stream.kernel_w)
    return _layout(strips, hw, shape)


def index_overhead_bits(stream: IndexStream) -> int:
    return stream.bit_length


def index_overhead(stream: IndexStream, placement: Placement, hw: HardwareConfig) -> dict:
    """Index size in bits/bytes and as a fraction of the mapped weight bytes."""
    bits = stream.bit_length
    model_bits = placement.total_cells_used * hw.weight_bits
    return {
        "bits": bits,
        "bytes": math.ceil(bits / 8),
        "fraction_of_model": bits / model_bits if model_bits else 0.0,
    }
