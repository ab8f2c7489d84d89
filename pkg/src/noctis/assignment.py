"""Proposal prefiltering, label assignment, thresholding and mask NMS."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .descriptors import SceneProposals, TemplateLibrary
from .masks import RleMask, rle_decode
from .scoring import InstanceScoreMatrix, ScoreConfig, instance_score_matrix, proposal_confidence


@dataclass
class AssignmentConfig:
    min_proposal_conf: float = 0.15
    min_relative_area: float = 1e-4
    conf_threshold: float = 0.2
    nms_iou: float = 0.5

    def __post_init__(self):
        for name in ("min_proposal_conf", "min_relative_area", "conf_threshold", "nms_iou"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")


@dataclass(eq=False)
class DetectionResult:
    """A labeled, scored, masked detection.

    ``proposal_index`` tracks which proposal of the source scene produced
    the detection; it orders serialized results and breaks NMS ties, but
    is not part of the result-file schema.
    """

    scene_id: int
    image_id: int
    object_id: int
    score: float
    bbox: tuple[float, float, float, float]
    mask: RleMask
    proposal_index: int = -1


def _prefilter_keep(scene: SceneProposals, cfg: AssignmentConfig) -> list[bool]:
    w, h = scene.image_size
    total = w * h
    keep = []
    for p in scene.proposals:
        conf_ok = proposal_confidence(p.box_conf, p.mask_conf) >= cfg.min_proposal_conf
        area_ok = p.mask.area() / total >= cfg.min_relative_area
        keep.append(conf_ok and area_ok)
    return keep


def prefilter_proposals(scene: SceneProposals, cfg: AssignmentConfig) -> SceneProposals:
    """Drop low-confidence and relatively tiny proposals, preserving order."""
    keep = _prefilter_keep(scene, cfg)
    return SceneProposals(
        scene_id=scene.scene_id,
        image_id=scene.image_id,
        image_size=scene.image_size,
        proposals=[p for p, k in zip(scene.proposals, keep) if k],
    )


def assign_labels(m: InstanceScoreMatrix) -> list[tuple[int, int, float]]:
    """Row-wise argmax: (proposal_id, best object_id, its score) per row."""
    if len(m.object_ids) == 0:
        raise ValueError("zero objects")
    out = []
    for row, pid in enumerate(m.proposal_ids):
        j = int(np.argmax(m.scores[row]))
        out.append((pid, m.object_ids[j], float(m.scores[row, j])))
    return out


def confidence_filter(dets: list[DetectionResult], delta_conf: float) -> list[DetectionResult]:
    return [d for d in dets if d.score >= delta_conf]


def mask_nms(dets: list[DetectionResult], iou_threshold: float) -> list[DetectionResult]:
    """Greedy label-agnostic NMS on mask IoU.

    Detections are visited by descending score (ties by ascending
    proposal index) and suppressed when their IoU with any kept mask
    exceeds the threshold.  The result keeps that visiting order.
    """
    if not dets:
        return []
    sizes = {tuple(d.mask.size) for d in dets}
    if len(sizes) > 1:
        raise ValueError("mask size mismatch")
    order = sorted(range(len(dets)), key=lambda i: (-dets[i].score, dets[i].proposal_index))
    flats = [rle_decode(dets[i].mask).reshape(-1) for i in range(len(dets))]
    areas = [int(f.sum()) for f in flats]
    kept: list[int] = []
    for i in order:
        suppressed = False
        for j in kept:
            inter = int(np.logical_and(flats[i], flats[j]).sum())
            union = areas[i] + areas[j] - inter
            if union == 0:
                raise ValueError("undefined IoU: both masks empty")
            if inter / union > iou_threshold:
                suppressed = True
                break
        if not suppressed:
            kept.append(i)
    return [dets[i] for i in kept]


def run_matching(
    scene: SceneProposals,
    lib: TemplateLibrary,
    score_cfg: ScoreConfig | None = None,
    assign_cfg: AssignmentConfig | None = None,
) -> list[DetectionResult]:
    """Full per-scene pipeline: prefilter, score, label, threshold, NMS."""
    if score_cfg is None:
        score_cfg = ScoreConfig()
    if assign_cfg is None:
        assign_cfg = AssignmentConfig()
    keep = _prefilter_keep(scene, assign_cfg)
    kept_indices = [i for i, k in enumerate(keep) if k]
    filtered = SceneProposals(
        scene_id=scene.scene_id,
        image_id=scene.image_id,
        image_size=scene.image_size,
        proposals=[scene.proposals[i] for i in kept_indices],
    )
    m = instance_score_matrix(filtered, lib, score_cfg)
    dets = []
    for row, object_id, score in assign_labels(m):
        prop = filtered.proposals[row]
        dets.append(
            DetectionResult(
                scene_id=scene.scene_id,
                image_id=scene.image_id,
                object_id=object_id,
                score=score,
                bbox=prop.bbox,
                mask=prop.mask,
                proposal_index=kept_indices[row],
            )
        )
    dets = confidence_filter(dets, assign_cfg.conf_threshold)
    return mask_nms(dets, assign_cfg.nms_iou)
