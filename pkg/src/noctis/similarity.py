"""Patch- and vector-level similarity kernels.

Cosine similarity, valid-patch pairwise similarity matrices, best-match
indices, and the cyclic (roundtrip) distance used to filter unreliable
patch correspondences: starting from a crop patch, follow its best match
into the template and back; the grid distance between start and landing
patch is the cyclic distance.  All argmax ties break toward the lowest
index, in both directions, so results are deterministic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .descriptors import PatchGridDescriptor


def max_cyclic_distance(grid_size: int) -> float:
    """Largest possible cyclic distance on a ``grid_size`` square grid."""
    return math.sqrt(2.0) * (grid_size - 1)


def cosine_similarity(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ValueError("zero vector")
    return float(np.dot(a, b) / (na * nb))


@dataclass(eq=False)
class PatchSimMatrix:
    """Cosine similarities between the valid patches of two descriptors.

    Row ``l`` covers the l-th valid patch of the first descriptor,
    column ``j`` the j-th valid patch of the second, both enumerated in
    row-major grid order.  ``row_positions`` / ``col_positions`` give the
    (row, col) grid coordinates behind each index.
    """

    values: np.ndarray
    row_positions: np.ndarray
    col_positions: np.ndarray


def _valid_unit_embeddings(desc: PatchGridDescriptor) -> tuple[np.ndarray, np.ndarray]:
    """Valid-patch embeddings, unit normalized, plus their grid positions."""
    if not desc.valid.any():
        raise ValueError("descriptor has no valid patch")
    positions = np.argwhere(desc.valid)  # row-major order
    emb = desc.patches[desc.valid].astype(np.float64)
    norms = np.linalg.norm(emb, axis=1)
    if np.any(norms == 0.0):
        raise ValueError("zero vector")
    return emb / norms[:, None], positions


def pairwise_patch_similarity(a: PatchGridDescriptor, b: PatchGridDescriptor) -> PatchSimMatrix:
    ea, pa = _valid_unit_embeddings(a)
    eb, pb = _valid_unit_embeddings(b)
    return PatchSimMatrix(values=ea @ eb.T, row_positions=pa, col_positions=pb)


def best_match_index(sim_row) -> int:
    """Index of the maximum similarity; ties break toward the lowest index."""
    sim_row = np.asarray(sim_row)
    if sim_row.size == 0:
        raise ValueError("empty similarity row")
    return int(np.argmax(sim_row))


@dataclass(eq=False)
class CyclicDistanceMap:
    """Roundtrip matches and cyclic distances for every valid crop patch.

    ``cdist_sq`` holds the exact squared grid distance as an integer;
    ``cdist`` is its square root.  Threshold comparisons use the squared
    form so they are exact.
    """

    best_match_in_b: np.ndarray
    roundtrip_in_a: np.ndarray
    cdist: np.ndarray
    cdist_sq: np.ndarray
    positions: np.ndarray


def _cyclic_from_similarity(sim: PatchSimMatrix) -> CyclicDistanceMap:
    best = np.argmax(sim.values, axis=1)
    back = np.argmax(sim.values, axis=0)
    roundtrip = back[best]
    delta = sim.row_positions - sim.row_positions[roundtrip]
    cdist_sq = np.einsum("ij,ij->i", delta, delta)
    return CyclicDistanceMap(
        best_match_in_b=best,
        roundtrip_in_a=roundtrip,
        cdist=np.sqrt(cdist_sq.astype(np.float64)),
        cdist_sq=cdist_sq,
        positions=sim.row_positions,
    )


def cyclic_distance_map(crop: PatchGridDescriptor, template: PatchGridDescriptor) -> CyclicDistanceMap:
    return _cyclic_from_similarity(pairwise_patch_similarity(crop, template))


def patch_filter_flags(cmap: CyclicDistanceMap, delta_ct: float) -> np.ndarray:
    """True where the cyclic distance is at most ``delta_ct`` (inclusive)."""
    if delta_ct < 0:
        raise ValueError("delta_ct must be >= 0")
    return cmap.cdist_sq <= float(delta_ct) * float(delta_ct)
