"""Semantic, appearance and object-matching scores.

The scalar functions define the per-pair math; ``instance_score_matrix``
assembles all proposal-object scores in memory-bounded tiles.  The tiled
kernel allocates a single pairwise-similarity work buffer of
``batch_proposals * batch_objects * max_templates * G^2 * G^2`` reals and
reuses it for every tile; everything else it touches is at least a
factor ``G^2`` smaller.  Each matrix cell depends only on its own
proposal-object pair and is reduced in fixed index order, so the result
does not depend on the batch sizes.
"""

from __future__ import annotations

import threading
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

from .descriptors import PatchGridDescriptor, SceneProposals, TemplateLibrary
from .similarity import (
    _cyclic_from_similarity,
    cosine_similarity,
    pairwise_patch_similarity,
    patch_filter_flags,
)

APPEARANCE_AGGREGATION_MAX = "max"


@dataclass
class ScoreConfig:
    delta_ct: float = 5.0
    w_appe: float = 2.0
    clamp_weighted_appearance: bool = True
    semantic_top_k: int = 5
    appearance_aggregation: str = APPEARANCE_AGGREGATION_MAX
    batch_proposals: int = 8
    batch_objects: int = 4

    def __post_init__(self):
        if self.delta_ct < 0:
            raise ValueError("delta_ct must be >= 0")
        if self.w_appe <= 0:
            raise ValueError("w_appe must be > 0")
        if self.semantic_top_k < 1:
            raise ValueError("semantic_top_k must be >= 1")
        if self.appearance_aggregation != APPEARANCE_AGGREGATION_MAX:
            raise ValueError(f"unknown appearance aggregation: {self.appearance_aggregation}")
        if self.batch_proposals < 1 or self.batch_objects < 1:
            raise ValueError("batch sizes must be >= 1")


@dataclass(eq=False)
class InstanceScoreMatrix:
    """Object-matching scores for every proposal (row) and object (column)."""

    scores: np.ndarray
    proposal_ids: list[int]
    object_ids: list[int]


def semantic_score(proposal_cls, template_cls_list, top_k: int = 5) -> float:
    """Mean of the ``min(top_k, n_templates)`` largest cls similarities."""
    if len(template_cls_list) == 0:
        raise ValueError("empty template list")
    if top_k < 1:
        raise ValueError("top_k must be >= 1")
    sims = sorted(
        (cosine_similarity(proposal_cls, t) for t in template_cls_list), reverse=True
    )
    k = min(top_k, len(sims))
    return sum(sims[:k]) / k


def sub_appearance_score(
    crop: PatchGridDescriptor, template: PatchGridDescriptor, delta_ct: float
) -> float:
    """Average best patch similarity over all valid crop patches.

    Crop patches whose cyclic distance exceeds ``delta_ct`` contribute
    zero; the denominator still counts every valid crop patch.
    """
    sim = pairwise_patch_similarity(crop, template)
    flags = patch_filter_flags(_cyclic_from_similarity(sim), delta_ct)
    best = sim.values.max(axis=1)
    return float(np.where(flags, best, 0.0).sum() / best.shape[0])


def appearance_score(
    crop: PatchGridDescriptor, templates: list[PatchGridDescriptor], delta_ct: float
) -> float:
    if len(templates) == 0:
        raise ValueError("empty template list")
    return max(sub_appearance_score(crop, t, delta_ct) for t in templates)


def proposal_confidence(box_conf: float, mask_conf: float) -> float:
    if not (0.0 <= box_conf <= 1.0 and 0.0 <= mask_conf <= 1.0):
        raise ValueError("confidence outside [0, 1]")
    return (box_conf + mask_conf) / 2.0


def object_matching_score(s_sem: float, s_appe: float, conf: float, cfg: ScoreConfig) -> float:
    """Confidence-weighted mean of the semantic and weighted appearance score."""
    if not 0.0 <= conf <= 1.0:
        raise ValueError("confidence outside [0, 1]")
    a = cfg.w_appe * s_appe
    if cfg.clamp_weighted_appearance:
        a = min(max(a, 0.0), 1.0)
    return (s_sem + a) / 2.0 * conf


# --- work-buffer accounting -------------------------------------------------

_tracker_lock = threading.Lock()
_active_trackers: list["BufferTracker"] = []


@dataclass
class BufferTracker:
    """Records kernel work-buffer allocations (tag, element count)."""

    allocations: list[tuple[str, int]] = field(default_factory=list)

    def record(self, tag: str, n_elements: int) -> None:
        self.allocations.append((tag, n_elements))

    def peak_elements(self) -> int:
        return max((n for _, n in self.allocations), default=0)


@contextmanager
def track_buffers():
    """Collect the scoring kernel's buffer allocations for inspection."""
    tracker = BufferTracker()
    with _tracker_lock:
        _active_trackers.append(tracker)
    try:
        yield tracker
    finally:
        with _tracker_lock:
            _active_trackers.remove(tracker)


def _alloc(shape, dtype, tag: str) -> np.ndarray:
    n = int(np.prod(shape))
    with _tracker_lock:
        for tracker in _active_trackers:
            tracker.record(tag, n)
    return np.empty(shape, dtype=dtype)


# --- batched score matrix ---------------------------------------------------


def _normalized_patch_grid(desc: PatchGridDescriptor) -> np.ndarray:
    """(G*G, D) float64 unit rows for valid patches, zero rows elsewhere."""
    g = desc.grid_size
    flat = desc.patches.reshape(g * g, -1).astype(np.float64)
    norms = np.linalg.norm(flat, axis=1)
    valid = desc.valid.reshape(g * g)
    if np.any(valid & (norms == 0.0)):
        raise ValueError("zero vector")
    norms[~valid] = 1.0
    return flat / norms[:, None]


def _normalized_cls(cls: np.ndarray) -> np.ndarray:
    v = cls.astype(np.float64)
    n = np.linalg.norm(v)
    if n == 0.0:
        raise ValueError("zero vector")
    return v / n


def instance_score_matrix(
    scene: SceneProposals, lib: TemplateLibrary, cfg: ScoreConfig | None = None
) -> InstanceScoreMatrix:
    """Score every proposal against every object, tiled over both axes.

    Entry (p, k) equals
    ``object_matching_score(semantic(p, k), appearance(p, k), conf_p)``.
    """
    if cfg is None:
        cfg = ScoreConfig()
    lib.validate()
    object_ids = lib.object_ids
    n_p = len(scene.proposals)
    n_o = len(object_ids)
    if n_p == 0:
        return InstanceScoreMatrix(
            scores=np.zeros((0, n_o), dtype=np.float64), proposal_ids=[], object_ids=object_ids
        )
    if scene.embed_dim != lib.embed_dim or scene.grid_size != lib.grid_size:
        raise ValueError(
            "dimension mismatch: scene descriptors are "
            f"D={scene.embed_dim}, G={scene.grid_size} but library has "
            f"D={lib.embed_dim}, G={lib.grid_size}"
        )

    d = lib.embed_dim
    g = lib.grid_size
    p2 = g * g
    n_t = np.array([len(obj.templates) for obj in lib.objects])
    n_t_max = int(n_t.max())

    # per-proposal inputs
    crop_cls = np.stack([_normalized_cls(p.descriptor.cls) for p in scene.proposals])
    crop_patch = np.stack([_normalized_patch_grid(p.descriptor) for p in scene.proposals])
    crop_valid = np.stack([p.descriptor.valid.reshape(p2) for p in scene.proposals])
    n_valid_crop = crop_valid.sum(axis=1)
    conf = np.array(
        [proposal_confidence(p.box_conf, p.mask_conf) for p in scene.proposals]
    )

    # per-object template inputs, padded to n_t_max templates
    tmpl_cls = np.zeros((n_o, n_t_max, d))
    tmpl_patch = np.zeros((n_o, n_t_max, p2, d))
    tmpl_valid = np.zeros((n_o, n_t_max, p2), dtype=bool)
    for k, obj in enumerate(lib.objects):
        for i, t in enumerate(obj.templates):
            tmpl_cls[k, i] = _normalized_cls(t.cls)
            tmpl_patch[k, i] = _normalized_patch_grid(t)
            tmpl_valid[k, i] = t.valid.reshape(p2)
    tmpl_exists = np.arange(n_t_max)[None, :] < n_t[:, None]

    # Semantic scores, computed once at full size (N_P x N_O x N_T reals,
    # a factor G^4 below the appearance buffer).
    sem_sims = _alloc((n_p, n_o, n_t_max), np.float64, "cls_sim")
    np.matmul(crop_cls, tmpl_cls.reshape(n_o * n_t_max, d).T, out=sem_sims.reshape(n_p, -1))
    sem_sims[:, ~tmpl_exists] = -np.inf
    sem_sorted = -np.sort(-sem_sims, axis=-1)
    sem_cum = np.cumsum(sem_sorted, axis=-1)
    top_k = np.minimum(cfg.semantic_top_k, n_t)
    sem = np.take_along_axis(sem_cum, (top_k - 1)[None, :, None], axis=-1)[..., 0] / top_k

    # Appearance scores, tiled over proposals and objects.  One reusable
    # buffer holds the pairwise patch similarities of a full tile.
    bp = min(cfg.batch_proposals, n_p)
    bo = min(cfg.batch_objects, n_o)
    appe = np.empty((n_p, n_o))
    # Flat work buffers, carved into exactly-sized contiguous views per
    # tile; a sliced 5-D view would be non-contiguous on edge tiles and
    # force matmul to materialize a second patch-squared temporary.
    buf = _alloc((bp * bo * n_t_max * p2 * p2,), np.float64, "pairwise_sim_tile")
    col_val = _alloc((bp * bo * n_t_max * p2,), np.float64, "col_scan_val")
    col_idx = _alloc((bp * bo * n_t_max * p2,), np.int64, "col_scan_idx")
    grid_rows = np.arange(p2) // g
    grid_cols = np.arange(p2) % g
    delta_sq = float(cfg.delta_ct) * float(cfg.delta_ct)

    for p0 in range(0, n_p, bp):
        p1 = min(p0 + bp, n_p)
        for o0 in range(0, n_o, bo):
            o1 = min(o0 + bo, n_o)
            shape = (p1 - p0, o1 - o0, n_t_max)
            n_pairs = shape[0] * shape[1] * shape[2]
            tile = buf[: n_pairs * p2 * p2].reshape(*shape, p2, p2)
            np.matmul(
                crop_patch[p0:p1, None, None],
                tmpl_patch[None, o0:o1].swapaxes(-1, -2),
                out=tile,
            )
            # exclude invalid patches from every argmax/max
            np.copyto(tile, -np.inf, where=~crop_valid[p0:p1, None, None, :, None])
            np.copyto(tile, -np.inf, where=~tmpl_valid[None, o0:o1, :, None, :])

            best_sim = tile.max(axis=-1)
            best_j = tile.argmax(axis=-1)
            # argmax over the crop axis, scanned row by row so no second
            # patch-squared buffer is ever materialized; strict > keeps
            # the lowest index on ties
            cv = col_val[: n_pairs * p2].reshape(*shape, p2)
            ci = col_idx[: n_pairs * p2].reshape(*shape, p2)
            np.copyto(cv, tile[..., 0, :])
            ci.fill(0)
            for i in range(1, p2):
                better = tile[..., i, :] > cv
                np.copyto(cv, tile[..., i, :], where=better)
                np.copyto(ci, i, where=better)
            roundtrip = np.take_along_axis(ci, best_j, axis=-1)
            dr = grid_rows[None, None, None, :] - grid_rows[roundtrip]
            dc = grid_cols[None, None, None, :] - grid_cols[roundtrip]
            cdist_sq = dr * dr + dc * dc

            keep = (cdist_sq <= delta_sq) & crop_valid[p0:p1, None, None, :]
            terms = np.where(keep, best_sim, 0.0)
            sub = terms.sum(axis=-1) / n_valid_crop[p0:p1, None, None]
            sub[:, ~tmpl_exists[o0:o1]] = -np.inf
            appe[p0:p1, o0:o1] = sub.max(axis=-1)

    weighted = cfg.w_appe * appe
    if cfg.clamp_weighted_appearance:
        np.clip(weighted, 0.0, 1.0, out=weighted)
    scores = (sem + weighted) / 2.0 * conf[:, None]
    return InstanceScoreMatrix(
        scores=scores, proposal_ids=list(range(n_p)), object_ids=object_ids
    )
