from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from patternmap.core import LayerWeights, Pattern, PatternMapError, sparsity
from patternmap.pruning import (
    extract_histogram,
    magnitude_prune,
    project_kernel,
    prune_layer,
    select_candidates,
)
from patternmap.synthetic import PROFILES, example_layer, vgg16_layers

A = Pattern.from_positions([(0, 0), (1, 1), (2, 2)])
B = Pattern.from_positions([(0, 1), (2, 1)])
C = Pattern.from_positions([(1, 0)])
Z = Pattern.zero()


def test_magnitude_prune_zero_target_is_identity():
    layer = LayerWeights("d", np.arange(1, 10).reshape(1, 1, 3, 3))
    assert np.array_equal(magnitude_prune(layer, 0.0).weights, layer.weights)


def test_magnitude_prune_half():
    layer = LayerWeights("k", np.array([4, 3, 2, 1]).reshape(1, 1, 2, 2))
    assert magnitude_prune(layer, 0.5).weights.ravel().tolist() == [4, 3, 0, 0]


def test_magnitude_prune_ties_by_position():
    layer = LayerWeights("k", np.array([2, 2, 2, 2]).reshape(1, 1, 2, 2))
    assert magnitude_prune(layer, 0.5).weights.ravel().tolist() == [0, 0, 2, 2]


def test_magnitude_prune_range():
    layer = LayerWeights("k", np.ones((1, 1, 2, 2), dtype=int))
    for bad in (-0.1, 1.5):
        with pytest.raises(ValueError):
            magnitude_prune(layer, bad)


def test_magnitude_prune_vgg_target():
    for layer in vgg16_layers(0, 0.125):
        assert sparsity(magnitude_prune(layer, 0.8595)) >= 0.8595


def test_histogram_dense_and_single():
    dense = LayerWeights("d", np.ones((4, 2, 3, 3), dtype=int))
    hist = extract_histogram(dense)
    assert hist.probabilities() == {Pattern(tuple([True] * 9)): Fraction(1)}
    single = LayerWeights("s", np.ones((1, 1, 3, 3), dtype=int))
    assert len(extract_histogram(single)) == 1


def test_histogram_example16():
    hist = extract_histogram(example_layer())
    probs = hist.probabilities()
    assert probs == {A: Fraction(6, 16), B: Fraction(5, 16), C: Fraction(3, 16), Z: Fraction(2, 16)}


def test_select_candidates_example16():
    cands = select_candidates(extract_histogram(example_layer()), 4)
    assert cands == [A, B, C, Z]


def test_select_candidates_appends_zero():
    cands = select_candidates(extract_histogram(example_layer()), 2)
    assert cands == [A, B, Z]
    assert select_candidates(extract_histogram(example_layer()), 2, include_zero=False) == [A, B]


def test_select_candidates_single_and_empty():
    dense = LayerWeights("d", np.ones((1, 1, 3, 3), dtype=int))
    assert select_candidates(extract_histogram(dense), 1, include_zero=False) == [Pattern(tuple([True] * 9))]
    with pytest.raises(PatternMapError):
        select_candidates(type(extract_histogram(dense))({}, 0), 1)


def test_select_candidates_tie_breaks():
    # equal counts: larger pattern first, then the lexicographically smaller mask
    w = np.zeros((3, 1, 3, 3), dtype=int)
    w[0, 0, 0, 0] = 1
    w[1, 0, 2, 2] = 1
    w[2, 0, 0, :2] = 1
    hist = extract_histogram(LayerWeights("t", w))
    cands = select_candidates(hist, 3, include_zero=False)
    assert cands[0].size == 2
    assert cands[1:] == sorted(cands[1:], key=lambda p: p.mask)


def test_project_exact_match():
    k = np.zeros((3, 3), dtype=int)
    k[0, 1], k[2, 1] = 5, -7
    j, out = project_kernel(k, [A, B, C, Z])
    assert j == 1 and np.array_equal(out, k)


def test_project_zero_kernel():
    j, out = project_kernel(np.zeros((3, 3), dtype=int), [A, B, Z])
    assert j == 2 and not out.any()


def test_project_tie_retained_norm():
    k = np.zeros((3, 3), dtype=int)
    k[0, 0], k[1, 1] = 3, 4
    cands = [A, Pattern.from_positions([(1, 1)])]
    j, out = project_kernel(k, cands, "hamming")
    assert j == 0
    assert out[0, 0] == 3 and out[1, 1] == 4
    # reversed order still prefers the mask that keeps both weights
    j, _ = project_kernel(k, cands[::-1], "hamming")
    assert j == 1


def test_project_empty_candidates():
    with pytest.raises(PatternMapError):
        project_kernel(np.ones((3, 3)), [])


def test_prune_layer_budget_covers_all():
    layer = example_layer()
    projected, assignment = prune_layer(layer, 8)
    assert np.array_equal(projected.weights, layer.weights)
    assert (assignment.masks() == (layer.weights != 0)).all()


def test_prune_layer_example16_budget4():
    _, assignment = prune_layer(example_layer(), 4)
    assert {assignment.candidates[j] for j in np.unique(assignment.ids)} == {A, B, C, Z}


def test_budget_list_lengths():
    budgets = PROFILES["cifar10"]["budgets"]
    assert budgets == [2, 2, 2, 6, 8, 8, 8, 6, 5, 4, 6, 6, 8]
    for layer, budget in zip(vgg16_layers(0, 0.125), budgets):
        irregular = magnitude_prune(layer, 0.8195)
        _, assignment = prune_layer(irregular, budget)
        hist = extract_histogram(irregular)
        top = select_candidates(hist, budget, include_zero=False)
        assert len(top) == min(budget, len(hist))
        expected = len(top) + (0 if Z in top else 1)
        assert len(assignment.candidates) == expected


layer_strategy = st.builds(
    lambda o, i, seed, density: np.where(
        np.random.default_rng(seed).random((o, i, 3, 3)) < density,
        np.random.default_rng(seed + 1).integers(-50, 51, (o, i, 3, 3)),
        0,
    ),
    st.integers(1, 6),
    st.integers(1, 4),
    st.integers(0, 10_000),
    st.floats(0.1, 0.9),
)


@settings(max_examples=60, deadline=None)
@given(layer_strategy, st.integers(1, 6), st.sampled_from(["hamming", "cosine"]))
def test_prune_matches_oracle(w, budget, metric):
    layer = LayerWeights("h", w)
    projected, assignment = prune_layer(layer, budget, metric)
    sups = [oracles.support(k) for k in w.reshape(-1, 9)]
    want = oracles.top_k(oracles.histogram(sups), budget, True, 9)
    assert [p.mask for p in assignment.candidates] == want
    for n, kernel in enumerate(w.reshape(-1, 9)):
        j = oracles.best_candidate(kernel.tolist(), want, metric)
        assert assignment.ids.ravel()[n] == j
    # support shrinks into the mask, never grows
    assert not (projected.weights.astype(bool) & ~assignment.masks()).any()
    assert (np.count_nonzero(projected.weights.reshape(-1, 9), axis=1)
            <= np.count_nonzero(w.reshape(-1, 9), axis=1)).all()
    assert sparsity(projected) >= sparsity(layer)


@settings(max_examples=30, deadline=None)
@given(layer_strategy, st.integers(1, 6))
def test_prune_is_idempotent(w, budget):
    projected, assignment = prune_layer(LayerWeights("h", w), budget)
    again, assignment2 = prune_layer(projected, budget, candidates=assignment.candidates)
    assert np.array_equal(again.weights, projected.weights)
