"""Synthetic VGG16-shaped conv stacks and random test layers."""

from __future__ import annotations

import numpy as np

from .core import LayerWeights, Pattern, quantize_symmetric

# (in_channels, out_channels) of the 13 VGG16 conv layers; the classifier is not mapped
VGG16_CONV = [
    (3, 64), (64, 64),
    (64, 128), (128, 128),
    (128, 256), (256, 256), (256, 256),
    (256, 512), (512, 512), (512, 512),
    (512, 512), (512, 512), (512, 512),
]

# per-layer pattern budgets, irregular (pre-pattern) and pattern-pruned sparsity,
# and all-zero kernel ratio reported for full-scale VGG16
PROFILES = {
    "cifar10": {
        "budgets": [2, 2, 2, 6, 8, 8, 8, 6, 5, 4, 6, 6, 8],
        "irregular_sparsity": 0.8195,
        "sparsity": 0.8603,
        "zero_ratio": 0.409,
    },
    "cifar100": {
        "budgets": [2, 2, 2, 2, 2, 8, 8, 8, 5, 6, 7, 6, 8],
        "irregular_sparsity": 0.8195,
        "sparsity": 0.8523,
        "zero_ratio": 0.274,
    },
    "imagenet": {
        "budgets": [2, 2, 2, 2, 2, 9, 12, 12, 9, 10, 6, 4, 4],
        "irregular_sparsity": 0.8338,
        "sparsity": 0.8248,
        "zero_ratio": 0.285,
    },
}

# full-scale results for the three profiles, carried into reports as reference lines
REFERENCE = {
    "cifar10": {"area_efficiency": 4.67, "energy_efficiency": 2.13, "speedup": 1.35, "index_fraction": 0.122},
    "cifar100": {"area_efficiency": 5.20, "energy_efficiency": 2.15, "speedup": 1.15},
    "imagenet": {"area_efficiency": 4.16, "energy_efficiency": 1.98, "speedup": 1.17},
}


def _library(rng: np.random.Generator, size: int, kernel: int, mean_size: float) -> list[np.ndarray]:
    kk = kernel * kernel
    lib, seen = [], set()
    while len(lib) < size:
        k = int(np.clip(rng.poisson(mean_size - 1) + 1, 1, kk))
        mask = np.zeros(kk, dtype=bool)
        mask[rng.choice(kk, k, replace=False)] = True
        key = mask.tobytes()
        if key not in seen:
            seen.add(key)
            lib.append(mask)
    return lib


def structured_layer(
    rng: np.random.Generator,
    name: str,
    in_channels: int,
    out_channels: int,
    kernel: int = 3,
    zero_ratio: float = 0.35,
    density: float = 0.14,
    library_size: int = 16,
    irregularity: float = 0.05,
    padding: int = 1,
) -> LayerWeights:
    """Dense float layer whose strong weights follow a small pattern library.

    A ``zero_ratio`` share of kernels carry only weak weights. The rest
    draw a library pattern (Zipf-weighted) for their strong positions, with
    ``irregularity`` controlling random strong/weak flips. Magnitude pruning
    to ``1 - density`` then yields an irregular sparse layer with a
    concentrated pattern distribution.
    """
    kk = kernel * kernel
    mean_size = density * kk / max(1e-9, 1.0 - zero_ratio)
    lib = _library(rng, library_size, kernel, mean_size)
    popularity = 1.0 / np.arange(1, library_size + 1)
    popularity /= popularity.sum()
    n = out_channels * in_channels
    choice = rng.choice(library_size, n, p=popularity)
    strong = np.array(lib)[choice]
    strong &= rng.random((n, kk)) >= irregularity
    strong |= rng.random((n, kk)) < irregularity * density
    strong[rng.random(n) < zero_ratio] = False
    sign = rng.choice([-1.0, 1.0], (n, kk))
    weak = rng.uniform(0.01, 0.2, (n, kk))
    big = rng.uniform(0.5, 1.0, (n, kk))
    values = sign * np.where(strong, big, weak)
    weights = quantize_symmetric(values.reshape(out_channels, in_channels, kernel, kernel), 16)
    return LayerWeights(name, weights, stride=1, padding=padding)


def vgg16_layers(
    seed: int = 0,
    width_scale: float = 1.0,
    profile: str = "cifar10",
    irregularity: float = 0.05,
) -> list[LayerWeights]:
    """13 dense VGG16-shaped conv layers, channel counts scaled by ``width_scale``.

    The strong-weight density matches the profile's irregular sparsity, so
    magnitude pruning to that sparsity leaves roughly the strong weights.
    """
    prof = PROFILES[profile]
    rng = np.random.default_rng(seed)
    layers = []
    for n, (cin, cout) in enumerate(VGG16_CONV):
        i = cin if n == 0 else max(1, round(cin * width_scale))
        o = max(1, round(cout * width_scale))
        layers.append(
            structured_layer(
                rng,
                f"conv{n + 1}",
                i,
                o,
                zero_ratio=prof["zero_ratio"],
                density=1.0 - prof["irregular_sparsity"],
                irregularity=irregularity,
            )
        )
    return layers


def random_layer(
    rng: np.random.Generator,
    name: str = "rand",
    max_channels: int = 32,
    kernels: tuple[int, ...] = (1, 3, 5),
    max_value: int = 127,
) -> LayerWeights:
    """Small dense layer with strictly nonzero integer weights and random stride/padding."""
    k = int(rng.choice(kernels))
    o = int(rng.integers(1, max_channels + 1))
    i = int(rng.integers(1, max_channels + 1))
    mag = rng.integers(1, max_value + 1, (o, i, k, k))
    weights = mag * rng.choice([-1, 1], (o, i, k, k))
    stride = int(rng.integers(1, 3))
    padding = int(rng.integers(0, k // 2 + 1))
    return LayerWeights(name, weights, stride=stride, padding=padding)


def relu_feature_map(
    rng: np.random.Generator,
    channels: int,
    height: int,
    width: int,
    zero_fraction: float = 0.5,
    dead_block: int = 0,
    max_value: int = 255,
) -> np.ndarray:
    """Non-negative activations with about ``zero_fraction`` zeros.

    ``dead_block`` zeroes a square corner of that side on every channel so
    some windows are entirely zero.
    """
    x = rng.integers(1, max_value + 1, (channels, height, width))
    x[rng.random(x.shape) < zero_fraction] = 0
    if dead_block:
        x[:, :dead_block, :dead_block] = 0
    return x


def example_layer() -> LayerWeights:
    """One-input, sixteen-output 3x3 layer with four patterns, one all-zero.

    Six kernels share a 3-weight pattern, five a 2-weight pattern, three a
    1-weight pattern, two are all zero; kernels are interleaved so the
    reorder step has work to do.
    """
    a = Pattern.from_positions([(0, 0), (1, 1), (2, 2)])
    b = Pattern.from_positions([(0, 1), (2, 1)])
    c = Pattern.from_positions([(1, 0)])
    z = Pattern.zero()
    plan = [a, b, c, a, z, b, a, c, b, a, b, z, a, c, b, a]
    weights = np.zeros((16, 1, 3, 3), dtype=np.int64)
    for o, pattern in enumerate(plan):
        for n, (r, col) in enumerate(pattern.positions):
            weights[o, 0, r, col] = (o + 1) * 10 + n + 1
    return LayerWeights("example16", weights, stride=1, padding=1)
