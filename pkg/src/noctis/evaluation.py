"""Average-precision evaluation over mask IoU thresholds 0.50:0.05:0.95.

Detections are matched greedily per image and object, highest score
first, each to the unmatched ground-truth mask of highest IoU at or
above the threshold.  The per-threshold AP is the 101-point interpolated
area under the precision-recall curve; per-object AP averages over
thresholds and the mean AP averages over all objects present in the
ground truth.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .assignment import DetectionResult
from .masks import RleMask, mask_iou, rle_decode, rle_encode, validate_rle

__all__ = [
    "RleMask",
    "rle_encode",
    "rle_decode",
    "mask_iou",
    "GroundTruthAnnotation",
    "ApReport",
    "default_iou_thresholds",
    "average_precision",
    "evaluate_dataset",
    "load_ground_truth",
    "load_results",
]

RECALL_LEVELS = np.arange(101) / 100.0


def default_iou_thresholds() -> list[float]:
    return [t / 100 for t in range(50, 100, 5)]


@dataclass(eq=False)
class GroundTruthAnnotation:
    scene_id: int
    image_id: int
    object_id: int
    mask: RleMask
    ignore: bool = False


@dataclass(eq=False)
class ApReport:
    mean_ap: float
    per_object: dict[int, float] = field(default_factory=dict)
    per_iou: dict[float, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "mean_ap": self.mean_ap,
            "per_object": {str(k): v for k, v in sorted(self.per_object.items())},
            "per_iou": {f"{t:.2f}": v for t, v in sorted(self.per_iou.items())},
        }


def _ap_from_flags(tp: np.ndarray, fp: np.ndarray, n_positive: int) -> float:
    """101-point interpolated AP from per-rank TP/FP flags."""
    if tp.size == 0:
        return 0.0
    tpc = np.cumsum(tp)
    fpc = np.cumsum(fp)
    recall = tpc / n_positive
    precision = tpc / (tpc + fpc)
    # monotone envelope from the right
    for i in range(precision.size - 1, 0, -1):
        if precision[i] > precision[i - 1]:
            precision[i - 1] = precision[i]
    idx = np.searchsorted(recall, RECALL_LEVELS, side="left")
    sampled = np.where(idx < recall.size, precision[np.minimum(idx, recall.size - 1)], 0.0)
    return float(sampled.mean())


def _match_detections(ious: np.ndarray, gt_ignore: list[bool], threshold: float):
    """Greedy per-image matching of score-ordered detections to GT masks.

    ``ious[d, g]`` holds the detection-to-GT IoU.  Real (non-ignore) GT
    masks are preferred; an ignore-flagged match removes the detection
    from the precision-recall statistics.  Returns per-detection flags
    (tp, ignored).
    """
    n_det, n_gt = ious.shape
    used = [False] * n_gt
    tp = np.zeros(n_det, dtype=bool)
    ignored = np.zeros(n_det, dtype=bool)
    for di in range(n_det):
        best_j = -1
        best_iou = -1.0
        best_is_ignore = True
        for gj in range(n_gt):
            if used[gj] or ious[di, gj] < threshold:
                continue
            candidate_ignore = gt_ignore[gj]
            # a real GT beats any ignore GT; otherwise take the higher IoU
            if (candidate_ignore, -ious[di, gj]) < (best_is_ignore, -best_iou):
                best_j, best_iou, best_is_ignore = gj, ious[di, gj], candidate_ignore
        if best_j >= 0:
            used[best_j] = True
            if best_is_ignore:
                ignored[di] = True
            else:
                tp[di] = True
    return tp, ignored


def _pair_ious(dets: list[DetectionResult], gts: list[GroundTruthAnnotation]) -> np.ndarray:
    det_flat = [rle_decode(d.mask).reshape(-1) for d in dets]
    gt_flat = [rle_decode(g.mask).reshape(-1) for g in gts]
    out = np.zeros((len(dets), len(gts)))
    for i, df in enumerate(det_flat):
        da = int(df.sum())
        for j, gf in enumerate(gt_flat):
            ga = int(gf.sum())
            inter = int(np.logical_and(df, gf).sum())
            union = da + ga - inter
            out[i, j] = inter / union if union > 0 else 0.0
    return out


def average_precision(
    dets: list[DetectionResult],
    gts: list[GroundTruthAnnotation],
    iou_thresholds: list[float] | None = None,
) -> ApReport:
    if iou_thresholds is None:
        iou_thresholds = default_iou_thresholds()
    if not iou_thresholds or any(not 0.0 < t <= 1.0 for t in iou_thresholds):
        raise ValueError("iou_thresholds must be non-empty with values in (0, 1]")

    gt_by_key: dict[tuple[int, int, int], list[GroundTruthAnnotation]] = {}
    n_positive: dict[int, int] = {}
    for g in gts:
        gt_by_key.setdefault((g.scene_id, g.image_id, g.object_id), []).append(g)
        if not g.ignore:
            n_positive[g.object_id] = n_positive.get(g.object_id, 0) + 1
    # objects with only ignore annotations have no defined AP
    evaluated = sorted(n_positive)

    det_by_obj: dict[int, list[DetectionResult]] = {k: [] for k in evaluated}
    for d in dets:
        if d.object_id in det_by_obj:
            det_by_obj[d.object_id].append(d)

    ap: dict[int, dict[float, float]] = {}
    for obj in evaluated:
        obj_dets = sorted(
            det_by_obj[obj], key=lambda d: -d.score
        )  # sorted() is stable: ties keep input order
        # group by image, remembering each detection's global rank
        images: dict[tuple[int, int], list[int]] = {}
        for rank, d in enumerate(obj_dets):
            images.setdefault((d.scene_id, d.image_id), []).append(rank)
        iou_cache = {}
        for key, ranks in images.items():
            gt_list = gt_by_key.get((key[0], key[1], obj), [])
            iou_cache[key] = (
                _pair_ious([obj_dets[r] for r in ranks], gt_list),
                [g.ignore for g in gt_list],
            )
        ap[obj] = {}
        for t in iou_thresholds:
            tp = np.zeros(len(obj_dets), dtype=bool)
            ignored = np.zeros(len(obj_dets), dtype=bool)
            for key, ranks in images.items():
                ious, gt_ignore = iou_cache[key]
                img_tp, img_ign = _match_detections(ious, gt_ignore, t)
                tp[ranks] = img_tp
                ignored[ranks] = img_ign
            keep = ~ignored
            ap[obj][t] = _ap_from_flags(tp[keep], ~tp[keep], n_positive[obj])

    per_object = {obj: sum(ap[obj].values()) / len(iou_thresholds) for obj in evaluated}
    per_iou = {
        t: (sum(ap[obj][t] for obj in evaluated) / len(evaluated) if evaluated else 0.0)
        for t in iou_thresholds
    }
    mean_ap = sum(per_object.values()) / len(evaluated) if evaluated else 0.0
    return ApReport(mean_ap=mean_ap, per_object=per_object, per_iou=per_iou)


# --- file-level evaluation --------------------------------------------------


def load_ground_truth(path) -> list[GroundTruthAnnotation]:
    data = json.loads(Path(path).read_text())
    if not isinstance(data, list):
        raise ValueError("ground truth must be a JSON array")
    gts = []
    for entry in data:
        mask = RleMask(
            size=tuple(int(v) for v in entry["mask"]["size"]),
            counts=[int(c) for c in entry["mask"]["counts"]],
        )
        validate_rle(mask)
        gts.append(
            GroundTruthAnnotation(
                scene_id=int(entry["scene_id"]),
                image_id=int(entry["image_id"]),
                object_id=int(entry["object_id"]),
                mask=mask,
                ignore=bool(entry.get("ignore", False)),
            )
        )
    return gts


def load_results(path) -> list[DetectionResult]:
    data = json.loads(Path(path).read_text())
    if not isinstance(data, list):
        raise ValueError("results must be a JSON array")
    dets = []
    for entry in data:
        mask = RleMask(
            size=tuple(int(v) for v in entry["segmentation"]["size"]),
            counts=[int(c) for c in entry["segmentation"]["counts"]],
        )
        validate_rle(mask)
        dets.append(
            DetectionResult(
                scene_id=int(entry["scene_id"]),
                image_id=int(entry["image_id"]),
                object_id=int(entry["category_id"]),
                score=float(entry["score"]),
                bbox=tuple(entry["bbox"]),
                mask=mask,
            )
        )
    return dets


def evaluate_dataset(results_path, gt_path) -> ApReport:
    """Score a result file against a ground-truth file."""
    gts = load_ground_truth(gt_path)
    dets = load_results(results_path)
    known = {g.object_id for g in gts}
    unknown = sorted({d.object_id for d in dets} - known)
    if unknown:
        raise ValueError(f"unknown object_id in results: {unknown}")
    return average_precision(dets, gts)
