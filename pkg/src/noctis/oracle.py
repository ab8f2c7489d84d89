"""Naive, unbatched reference implementations used by the test suite.

Everything here recomputes the pipeline math from first principles with
explicit loops, deliberately sharing no code with the production
kernels, so the two can check each other.  Not intended for real use.
"""

from __future__ import annotations

import math

import numpy as np

from .assignment import DetectionResult
from .descriptors import PatchGridDescriptor, SceneProposals, TemplateLibrary
from .evaluation import GroundTruthAnnotation
from .masks import rle_decode
from .scoring import InstanceScoreMatrix, ScoreConfig
from .similarity import CyclicDistanceMap


def _valid_list(desc: PatchGridDescriptor):
    """Valid patch embeddings (float64) and positions, row-major order."""
    vecs, positions = [], []
    g = desc.grid_size
    for r in range(g):
        for c in range(g):
            if desc.valid[r, c]:
                vecs.append(desc.patches[r, c].astype(np.float64))
                positions.append((r, c))
    return vecs, positions


def _cos(a: np.ndarray, b: np.ndarray) -> float:
    na = math.sqrt(float(np.dot(a, a)))
    nb = math.sqrt(float(np.dot(b, b)))
    if na == 0.0 or nb == 0.0:
        raise ValueError("zero vector")
    return float(np.dot(a, b)) / (na * nb)


def _argmax_lowest(values) -> int:
    best, best_v = 0, values[0]
    for i, v in enumerate(values):
        if v > best_v:
            best, best_v = i, v
    return best


def naive_cyclic_distance(crop: PatchGridDescriptor, template: PatchGridDescriptor) -> CyclicDistanceMap:
    """Exhaustive-loop roundtrip matching; ties break to the lowest index."""
    a_vecs, a_pos = _valid_list(crop)
    b_vecs, b_pos = _valid_list(template)
    sims = [[_cos(a, b) for b in b_vecs] for a in a_vecs]
    best, roundtrip, cdist, cdist_sq = [], [], [], []
    for l in range(len(a_vecs)):
        t = _argmax_lowest(sims[l])
        u = _argmax_lowest([sims[i][t] for i in range(len(a_vecs))])
        dr = a_pos[l][0] - a_pos[u][0]
        dc = a_pos[l][1] - a_pos[u][1]
        best.append(t)
        roundtrip.append(u)
        cdist_sq.append(dr * dr + dc * dc)
        cdist.append(math.sqrt(dr * dr + dc * dc))
    return CyclicDistanceMap(
        best_match_in_b=np.array(best, dtype=np.int64),
        roundtrip_in_a=np.array(roundtrip, dtype=np.int64),
        cdist=np.array(cdist),
        cdist_sq=np.array(cdist_sq, dtype=np.int64),
        positions=np.array(a_pos, dtype=np.int64).reshape(-1, 2),
    )


def _naive_sub_appearance(crop: PatchGridDescriptor, template: PatchGridDescriptor, delta_ct: float):
    """Sub-appearance score of one crop-template pair, loop form."""
    a_vecs, a_pos = _valid_list(crop)
    b_vecs, _ = _valid_list(template)
    a_mat = np.stack(a_vecs)
    b_mat = np.stack(b_vecs)
    a_norm = np.sqrt((a_mat * a_mat).sum(axis=1))
    b_norm = np.sqrt((b_mat * b_mat).sum(axis=1))
    if np.any(a_norm == 0.0) or np.any(b_norm == 0.0):
        raise ValueError("zero vector")
    sims = (a_mat @ b_mat.T) / np.outer(a_norm, b_norm)
    delta_sq = float(delta_ct) * float(delta_ct)
    total = 0.0
    for l in range(len(a_vecs)):
        t = _argmax_lowest(sims[l].tolist())
        u = _argmax_lowest(sims[:, t].tolist())
        dr = a_pos[l][0] - a_pos[u][0]
        dc = a_pos[l][1] - a_pos[u][1]
        if dr * dr + dc * dc <= delta_sq:
            total += float(sims[l, t])
    return total / len(a_vecs)


def naive_instance_score_matrix(
    scene: SceneProposals, lib: TemplateLibrary, cfg: ScoreConfig | None = None
) -> InstanceScoreMatrix:
    """Triple-loop score matrix: proposals x objects x templates."""
    if cfg is None:
        cfg = ScoreConfig()
    object_ids = [o.object_id for o in lib.objects]
    n_p = len(scene.proposals)
    scores = np.zeros((n_p, len(object_ids)))
    for pi, prop in enumerate(scene.proposals):
        conf = (float(prop.box_conf) + float(prop.mask_conf)) / 2.0
        crop_cls = prop.descriptor.cls.astype(np.float64)
        for ki, obj in enumerate(lib.objects):
            cls_sims = sorted(
                (_cos(crop_cls, t.cls.astype(np.float64)) for t in obj.templates),
                reverse=True,
            )
            k = min(cfg.semantic_top_k, len(cls_sims))
            sem = sum(cls_sims[:k]) / k
            appe = max(
                _naive_sub_appearance(prop.descriptor, t, cfg.delta_ct) for t in obj.templates
            )
            a = cfg.w_appe * appe
            if cfg.clamp_weighted_appearance:
                a = min(max(a, 0.0), 1.0)
            scores[pi, ki] = (sem + a) / 2.0 * conf
    return InstanceScoreMatrix(
        scores=scores, proposal_ids=list(range(n_p)), object_ids=object_ids
    )


def naive_ap(
    dets: list[DetectionResult],
    gts: list[GroundTruthAnnotation],
    thresholds: list[float],
) -> float:
    """Mean AP over objects and thresholds, computed the long way."""
    objects = sorted({g.object_id for g in gts if not g.ignore})
    if not objects:
        return 0.0
    total = 0.0
    for obj in objects:
        for t in thresholds:
            total += _naive_object_ap(dets, gts, obj, t)
    return total / (len(objects) * len(thresholds))


def _naive_object_ap(dets, gts, obj: int, threshold: float) -> float:
    obj_gts = [g for g in gts if g.object_id == obj]
    n_pos = sum(1 for g in obj_gts if not g.ignore)
    obj_dets = sorted(
        [d for d in dets if d.object_id == obj], key=lambda d: -d.score
    )
    matched = [False] * len(obj_gts)
    flags = []  # per detection: "tp", "fp" or "ignored"
    for d in obj_dets:
        best_j, best_iou, best_ign = -1, -1.0, True
        for j, g in enumerate(obj_gts):
            if matched[j] or (g.scene_id, g.image_id) != (d.scene_id, d.image_id):
                continue
            dm = rle_decode(d.mask)
            gm = rle_decode(g.mask)
            inter = int(np.logical_and(dm, gm).sum())
            union = int(dm.sum()) + int(gm.sum()) - inter
            iou = inter / union if union > 0 else 0.0
            if iou < threshold:
                continue
            if (g.ignore, -iou) < (best_ign, -best_iou):
                best_j, best_iou, best_ign = j, iou, g.ignore
        if best_j < 0:
            flags.append("fp")
        else:
            matched[best_j] = True
            flags.append("ignored" if best_ign else "tp")
    tp = fp = 0
    recalls, precisions = [], []
    for f in flags:
        if f == "ignored":
            continue
        if f == "tp":
            tp += 1
        else:
            fp += 1
        recalls.append(tp / n_pos if n_pos else 0.0)
        precisions.append(tp / (tp + fp))
    total = 0.0
    for i in range(101):
        level = i / 100.0
        best = 0.0
        for r, p in zip(recalls, precisions):
            if r >= level and p > best:
                best = p
        total += best
    return total / 101.0
