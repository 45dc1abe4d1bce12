import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from patternmap.core import (
    FeatureMap,
    HardwareConfig,
    LayerWeights,
    Pattern,
    PatternAssignment,
    WeightFileError,
    assignment_from_supports,
    load_feature_maps,
    load_weights,
    quantize_symmetric,
    save_feature_maps,
    save_weights,
    sparsity,
)
from patternmap.synthetic import example_layer


def _write_manifest(tmp_path, layers, blob: bytes, dtype="i16"):
    (tmp_path / "w.bin").write_bytes(blob)
    entries = []
    offset = 0
    for name, shape in layers:
        o, i, k = shape
        entries.append({"name": name, "out_channels": o, "in_channels": i, "kernel_h": k, "kernel_w": k,
                        "stride": 1, "padding": 0, "dtype": dtype, "offset_bytes": offset})
        offset += o * i * k * k * (2 if dtype == "i16" else 4)
    path = tmp_path / "manifest.json"
    path.write_text(json.dumps({"blob": "w.bin", "layers": entries}))
    return path


def test_quantize_unit_values():
    assert quantize_symmetric([-1.0, 0.0, 1.0], 16).tolist() == [-32767, 0, 32767]


def test_quantize_all_zero():
    assert quantize_symmetric(np.zeros(4)).tolist() == [0, 0, 0, 0]


def test_sparsity_examples():
    assert sparsity(LayerWeights("z", np.zeros((2, 1, 3, 3), dtype=int))) == 1.0
    assert sparsity(LayerWeights("d", np.ones((2, 1, 3, 3), dtype=int))) == 0.0
    w = np.zeros((16, 1, 3, 3), dtype=int)
    w[:14, 0, 0, :] = 5  # 14 kernels keep 3 of 9
    assert sparsity(LayerWeights("s", w)) == pytest.approx((144 - 42) / 144, abs=1e-12)
    assert round(sparsity(LayerWeights("s", w)), 4) == 0.7083


def test_layer_weights_read_only():
    layer = LayerWeights("l", np.ones((1, 1, 3, 3), dtype=int))
    with pytest.raises(ValueError):
        layer.weights[0, 0, 0, 0] = 3


def test_output_shape():
    layer = LayerWeights("l", np.ones((1, 1, 3, 3), dtype=int), stride=2, padding=1)
    assert layer.output_shape(8, 8) == (4, 4)


def test_pattern_from_kernel_and_positions():
    k = np.array([[1, 0, 0], [0, 2, 0], [0, 0, 0]])
    p = Pattern.from_kernel(k)
    assert p == Pattern.from_positions([(0, 0), (1, 1)])
    assert p.size == 2 and not p.is_zero
    assert p.flat_positions == (0, 4)
    assert str(p) == "100010000"
    assert Pattern.zero().is_zero


def test_assignment_from_supports_example16():
    layer = example_layer()
    a = assignment_from_supports(layer)
    assert len(a.candidates) == 4
    a.check(layer)
    assert (a.masks() == (layer.weights != 0)).all()


def test_assignment_check_rejects_outside_support():
    layer = LayerWeights("l", np.ones((1, 1, 3, 3), dtype=int))
    a = PatternAssignment((Pattern.from_positions([(0, 0)]),), np.zeros((1, 1), dtype=int))
    with pytest.raises(Exception):
        a.check(layer)


def test_index_bits():
    hw = HardwareConfig()
    assert hw.resolve_index_bits(512) == 9
    assert hw.resolve_index_bits(16) == 4
    assert hw.resolve_index_bits(17) == 5
    assert hw.resolve_index_bits(1) == 1
    assert HardwareConfig(index_bits=12).resolve_index_bits(16) == 12


def test_hardware_rejects_bad_config():
    with pytest.raises(ValueError):
        HardwareConfig(ou_rows=0)


def test_load_one_layer(tmp_path):
    path = _write_manifest(tmp_path, [("conv", (16, 1, 3))], np.arange(144, dtype="<i2").tobytes())
    (layer,) = load_weights(path)
    assert layer.weights.shape == (16, 1, 3, 3)
    assert layer.size == 144
    assert layer.weights.ravel().tolist() == list(range(144))


def test_load_short_blob(tmp_path):
    path = _write_manifest(tmp_path, [("conv", (16, 1, 3))], np.arange(100, dtype="<i2").tobytes())
    with pytest.raises(WeightFileError, match="blob length mismatch"):
        load_weights(path)


def test_load_missing_manifest(tmp_path):
    with pytest.raises(WeightFileError, match="not found"):
        load_weights(tmp_path / "nope.json")


def test_load_bad_dims_and_dtype(tmp_path):
    path = _write_manifest(tmp_path, [("conv", (0, 1, 3))], b"")
    with pytest.raises(WeightFileError, match="non-positive dimension"):
        load_weights(path)
    path = _write_manifest(tmp_path, [("conv", (1, 1, 1))], b"\0\0", dtype="q7")
    with pytest.raises(WeightFileError, match="unsupported dtype"):
        load_weights(path)


def test_load_float_is_quantized(tmp_path):
    path = _write_manifest(tmp_path, [("conv", (3, 1, 1))], np.array([-1.0, 0.0, 1.0], "<f4").tobytes(), dtype="f32")
    (layer,) = load_weights(path)
    assert layer.weights.ravel().tolist() == [-32767, 0, 32767]


def test_save_load_byte_identical(tmp_path):
    rng = np.random.default_rng(3)
    layers = [
        LayerWeights("a", rng.integers(-500, 500, (4, 2, 3, 3)), stride=2, padding=1),
        LayerWeights("b", rng.integers(-500, 500, (3, 4, 1, 1))),
    ]
    first = save_weights(layers, tmp_path / "one" / "manifest.json")
    loaded = load_weights(first)
    second = save_weights(loaded, tmp_path / "two" / "manifest.json")
    assert first.read_bytes() == second.read_bytes()
    assert (first.parent / "weights.bin").read_bytes() == (second.parent / "weights.bin").read_bytes()
    for a, b in zip(layers, loaded):
        assert np.array_equal(a.weights, b.weights)
        assert (a.name, a.stride, a.padding) == (b.name, b.stride, b.padding)


def test_feature_map_roundtrip(tmp_path):
    maps = [FeatureMap("conv1", np.arange(2 * 4 * 4).reshape(2, 4, 4))]
    path = save_feature_maps(maps, tmp_path / "inputs.json")
    loaded = load_feature_maps(path)
    assert np.array_equal(loaded["conv1"].data, maps[0].data)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(-32767, 32767), min_size=1, max_size=40))
def test_sparsity_counts_zeros(values):
    w = np.array(values).reshape(len(values), 1, 1, 1)
    assert sparsity(LayerWeights("h", w)) == values.count(0) / len(values)
