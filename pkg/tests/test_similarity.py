import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_descriptor
from noctis.descriptors import PatchGridDescriptor
from noctis.oracle import naive_cyclic_distance
from noctis.similarity import (
    best_match_index,
    cosine_similarity,
    cyclic_distance_map,
    max_cyclic_distance,
    pairwise_patch_similarity,
    patch_filter_flags,
)


def grid_descriptor(entries, grid=2, dim=3):
    """Descriptor with the given {(row, col): vector} valid patches."""
    patches = np.zeros((grid, grid, dim), dtype=np.float32)
    valid = np.zeros((grid, grid), dtype=bool)
    for (r, c), vec in entries.items():
        patches[r, c, : len(vec)] = vec
        valid[r, c] = True
    return PatchGridDescriptor(cls=np.ones(dim, dtype=np.float32), patches=patches, valid=valid)


# --- cosine -----------------------------------------------------------------


def test_cosine_same_direction():
    assert cosine_similarity([1, 0], [2, 0]) == pytest.approx(1.0)


def test_cosine_orthogonal():
    assert cosine_similarity([1, 0], [0, 3]) == pytest.approx(0.0)


def test_cosine_opposite():
    assert cosine_similarity([1, 2], [-1, -2]) == pytest.approx(-1.0)


def test_cosine_zero_vector_rejected():
    with pytest.raises(ValueError, match="zero vector"):
        cosine_similarity([0, 0], [1, 0])


@given(st.integers(0, 2**32 - 1), st.integers(2, 32))
def test_cosine_symmetry_and_bounds(seed, dim):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal(dim)
    b = rng.standard_normal(dim)
    v = cosine_similarity(a, b)
    assert v == pytest.approx(cosine_similarity(b, a), abs=1e-12)
    assert abs(v) <= 1.0 + 1e-6


@given(
    st.integers(0, 2**32 - 1),
    st.floats(min_value=1e-3, max_value=1e3, allow_nan=False),
)
def test_cosine_scale_invariance(seed, alpha):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal(8)
    b = rng.standard_normal(8)
    assert cosine_similarity(alpha * a, b) == pytest.approx(cosine_similarity(a, b), abs=1e-6)


# --- pairwise similarity ------------------------------------------------------


def test_pairwise_identity_orthonormal():
    d = grid_descriptor({(0, 0): [1, 0, 0], (0, 1): [0, 1, 0]})
    sim = pairwise_patch_similarity(d, d)
    assert np.allclose(sim.values, np.eye(2), atol=1e-12)


def test_pairwise_shape_contract():
    a = grid_descriptor({(0, 0): [1, 0, 0]})
    b = grid_descriptor({(0, 0): [1, 0, 0], (1, 0): [0, 1, 0], (1, 1): [1, 1, 0]})
    assert pairwise_patch_similarity(a, b).values.shape == (1, 3)


def test_pairwise_no_valid_patch_rejected():
    a = grid_descriptor({(0, 0): [1, 0, 0]})
    bad = PatchGridDescriptor(
        cls=np.ones(3, dtype=np.float32),
        patches=np.zeros((2, 2, 3), dtype=np.float32),
        valid=np.zeros((2, 2), dtype=bool),
    )
    with pytest.raises(ValueError, match="no valid patch"):
        pairwise_patch_similarity(a, bad)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=50)
def test_pairwise_matches_cosine_loop(seed):
    rng = np.random.default_rng(seed)
    dim = int(rng.integers(2, 65))
    a = random_descriptor(rng, dim, 4)
    b = random_descriptor(rng, dim, 4)
    sim = pairwise_patch_similarity(a, b)
    for i, (ra, ca) in enumerate(sim.row_positions):
        for j, (rb, cb) in enumerate(sim.col_positions):
            expected = cosine_similarity(a.patches[ra, ca], b.patches[rb, cb])
            assert sim.values[i, j] == pytest.approx(expected, abs=1e-5)


# --- best match ---------------------------------------------------------------


def test_best_match_unique_max():
    assert best_match_index([0.2, 0.9, 0.1]) == 1


def test_best_match_tie_breaks_low():
    assert best_match_index([0.5, 0.5]) == 0


def test_best_match_singleton():
    assert best_match_index([-0.3]) == 0


# --- cyclic distances -----------------------------------------------------------


def test_cyclic_identity_roundtrip():
    d = grid_descriptor({(0, 0): [1, 0, 0], (0, 1): [0, 1, 0], (1, 1): [0, 0, 1]})
    cmap = cyclic_distance_map(d, d)
    assert np.all(cmap.cdist == 0.0)
    assert np.array_equal(cmap.roundtrip_in_a, np.arange(3))


def test_cyclic_distance_one():
    # crop (0,0) -> template t -> crop (0,1)
    crop = grid_descriptor({(0, 0): [1, 0, 0], (0, 1): [0.8, 0.6, 0]})
    template = grid_descriptor({(0, 0): [0.8, 0.6, 0]})
    cmap = cyclic_distance_map(crop, template)
    assert cmap.cdist[0] == pytest.approx(1.0)
    assert cmap.cdist[1] == pytest.approx(0.0)


def test_cyclic_distance_sqrt2():
    crop = grid_descriptor({(0, 0): [1, 0, 0], (1, 1): [0.8, 0.6, 0]})
    template = grid_descriptor({(0, 0): [0.8, 0.6, 0]})
    cmap = cyclic_distance_map(crop, template)
    assert cmap.cdist[0] == pytest.approx(math.sqrt(2.0))


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=100)
def test_cyclic_matches_bruteforce(seed):
    rng = np.random.default_rng(seed)
    dim = int(rng.integers(2, 17))
    crop = random_descriptor(rng, dim, 4, max_valid=16)
    template = random_descriptor(rng, dim, 4, max_valid=16)
    fast = cyclic_distance_map(crop, template)
    slow = naive_cyclic_distance(crop, template)
    assert np.array_equal(fast.best_match_in_b, slow.best_match_in_b)
    assert np.array_equal(fast.roundtrip_in_a, slow.roundtrip_in_a)
    assert np.array_equal(fast.cdist_sq, slow.cdist_sq)


# --- filter flags ------------------------------------------------------------


def test_flags_all_true_at_zero_distance():
    d = grid_descriptor({(0, 0): [1, 0, 0], (0, 1): [0, 1, 0]})
    cmap = cyclic_distance_map(d, d)
    assert patch_filter_flags(cmap, 0.0).all()


def test_flags_direct_comparison():
    crop = grid_descriptor(
        {(0, 0): [1, 0, 0], (0, 1): [0, 1, 0], (1, 1): [0, 0, 1]}, grid=8
    )
    cmap = cyclic_distance_map(crop, crop)
    cmap.cdist_sq = np.array([0, 1, 36])
    assert patch_filter_flags(cmap, 5.0).tolist() == [True, True, False]


def test_flags_negative_delta_rejected():
    d = grid_descriptor({(0, 0): [1, 0, 0]})
    cmap = cyclic_distance_map(d, d)
    with pytest.raises(ValueError, match=">= 0"):
        patch_filter_flags(cmap, -0.5)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=50)
def test_flags_above_grid_diameter_always_true(seed):
    rng = np.random.default_rng(seed)
    crop = random_descriptor(rng, 8, 16, max_valid=32)
    template = random_descriptor(rng, 8, 16, max_valid=32)
    cmap = cyclic_distance_map(crop, template)
    assert max_cyclic_distance(16) == pytest.approx(math.sqrt(2) * 15)
    assert patch_filter_flags(cmap, 22.0).all()


@given(
    st.integers(0, 2**32 - 1),
    st.floats(min_value=0.0, max_value=25.0),
    st.floats(min_value=0.0, max_value=25.0),
)
@settings(max_examples=50)
def test_flags_monotone_in_delta(seed, d1, d2):
    lo, hi = sorted((d1, d2))
    rng = np.random.default_rng(seed)
    crop = random_descriptor(rng, 8, 8)
    template = random_descriptor(rng, 8, 8)
    cmap = cyclic_distance_map(crop, template)
    lo_flags = patch_filter_flags(cmap, lo)
    hi_flags = patch_filter_flags(cmap, hi)
    assert np.all(hi_flags[lo_flags])
