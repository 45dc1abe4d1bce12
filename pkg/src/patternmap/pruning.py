"""Pattern pruning without retraining.

Candidate patterns are the most frequent kernel supports of a layer; every
kernel is then projected onto the closest candidate and masked.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .core import LayerWeights, Pattern, PatternAssignment, PatternMapError

METRICS = ("hamming", "cosine")


@dataclass(frozen=True)
class PatternHistogram:
    counts: dict
    total: int

    def probability(self, pattern: Pattern) -> Fraction:
        return Fraction(self.counts.get(pattern, 0), self.total)

    def probabilities(self) -> dict:
        return {p: c / self.total for p, c in self.counts.items()}

    def __len__(self):
        return len(self.counts)


def magnitude_prune(layer: LayerWeights, target_sparsity: float) -> LayerWeights:
    """Zero the globally smallest-magnitude weights until ``target_sparsity`` is met.

    Ties are cut in flat (out, in, row, col) order.
    """
    if not 0.0 <= target_sparsity < 1.0:
        raise ValueError(f"target_sparsity must be in [0, 1), got {target_sparsity}")
    flat = layer.weights.ravel()
    n = flat.size
    k = math.ceil(target_sparsity * n)
    if k / n < target_sparsity:
        k += 1
    zeros = np.count_nonzero(flat == 0)
    if k <= zeros:
        return layer
    order = np.argsort(np.abs(flat), kind="stable")
    pruned = flat.copy()
    pruned[order[:k]] = 0
    return layer.with_weights(pruned.reshape(layer.weights.shape))


def extract_histogram(layer: LayerWeights) -> PatternHistogram:
    support = (layer.weights != 0).reshape(-1, layer.kernel_area)
    uniq, counts = np.unique(support, axis=0, return_counts=True)
    hist = {Pattern(tuple(row), layer.kernel_h, layer.kernel_w): int(c) for row, c in zip(uniq, counts)}
    return PatternHistogram(hist, support.shape[0])


def select_candidates(hist: PatternHistogram, budget: int, include_zero: bool = True) -> list[Pattern]:
    """Top-``budget`` patterns by frequency.

    Ties go to the larger pattern, then the lexicographically smaller mask.
    With ``include_zero`` the all-zero pattern is appended when it did not
    make the cut.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    if not hist.counts:
        raise PatternMapError("empty pattern histogram")
    ranked = sorted(hist.counts.items(), key=lambda kv: (-kv[1], -kv[0].size, kv[0].mask))
    chosen = [p for p, _ in ranked[:budget]]
    if include_zero and not any(p.is_zero for p in chosen):
        some = chosen[0]
        chosen.append(Pattern.zero(some.kernel_h, some.kernel_w))
    return chosen


def _distances(kernels: np.ndarray, masks: np.ndarray, metric: str) -> np.ndarray:
    """(N, M) distances between N flattened kernels and M boolean masks."""
    if metric == "hamming":
        support = kernels != 0
        return np.count_nonzero(support[:, None, :] ^ masks[None, :, :], axis=2).astype(np.float64)
    if metric == "cosine":
        mag = np.abs(kernels).astype(np.float64)
        m = masks.astype(np.float64)
        dot = mag @ m.T
        kn = np.linalg.norm(mag, axis=1)[:, None]
        mn = np.linalg.norm(m, axis=1)[None, :]
        with np.errstate(invalid="ignore", divide="ignore"):
            dist = 1.0 - dot / (kn * mn)
        kz, mz = kn == 0, mn == 0
        dist = np.where(kz | mz, np.where(kz & mz, 0.0, 1.0), dist)
        # collapse float noise so equal-angle candidates hit the tie-break
        return np.round(dist, 12)
    raise ValueError(f"unsupported metric {metric!r}; choose from {METRICS}")


def choose_patterns(kernels: np.ndarray, candidates: Sequence[Pattern], metric: str = "hamming") -> np.ndarray:
    """Candidate index per kernel: min distance, then max retained L2, then lowest index."""
    if not candidates:
        raise PatternMapError("empty candidate list")
    kernels = np.asarray(kernels).reshape(len(kernels), -1).astype(np.int64)
    masks = np.array([p.mask for p in candidates], dtype=bool)
    dist = _distances(kernels, masks, metric)
    retained = (kernels**2) @ masks.T.astype(np.int64)
    n, m = dist.shape
    index = np.broadcast_to(np.arange(m), (n, m))
    # lexsort: last key is primary
    order = np.lexsort((index, -retained, dist), axis=1)
    return order[:, 0]


def project_kernel(kernel, candidates: Sequence[Pattern], metric: str = "hamming") -> tuple[int, np.ndarray]:
    kernel = np.asarray(kernel)
    idx = int(choose_patterns(kernel.reshape(1, -1), candidates, metric)[0])
    return idx, kernel * candidates[idx].as_array()


def prune_layer(
    layer: LayerWeights,
    budget: int,
    metric: str = "hamming",
    include_zero: bool = True,
    candidates: Sequence[Pattern] | None = None,
    retain_from: LayerWeights | None = None,
) -> tuple[LayerWeights, PatternAssignment]:
    """Select candidates from ``layer`` and project every kernel onto one.

    ``retain_from`` supplies the weight values kept inside each chosen mask
    (typically the layer before magnitude pruning); by default the values
    come from ``layer`` itself.
    """
    if candidates is None:
        candidates = select_candidates(extract_histogram(layer), budget, include_zero)
    candidates = tuple(candidates)
    o, i = layer.out_channels, layer.in_channels
    ids = choose_patterns(layer.weights.reshape(o * i, -1), candidates, metric).reshape(o, i)
    assignment = PatternAssignment(candidates, ids)
    source = layer if retain_from is None else retain_from
    if source.weights.shape != layer.weights.shape:
        raise ValueError("retain_from must have the same shape as layer")
    projected = source.weights * assignment.masks()
    return layer.with_weights(projected), assignment
