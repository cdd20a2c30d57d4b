"""NMS fusion baseline: pool every model's detections, suppress redundancy."""

from __future__ import annotations

from dataclasses import dataclass

from .geometry import Polygon, iou
from .scoring import MatchConfig, PrfScore, match_detections, micro_aggregate

DEFAULT_NMS_IOU = 0.5


@dataclass(frozen=True)
class ScoredDetection:
    polygon: Polygon
    confidence: float
    source_model: int = 0

    def __post_init__(self):
        if not (0.0 <= self.confidence <= 1.0):
            raise ValueError(f"confidence must be in [0, 1], got {self.confidence}")


def nms(dets, iou_threshold: float = DEFAULT_NMS_IOU):
    """Greedy hard-NMS.

    Detections are visited by confidence descending (ties: lower
    source_model, then input order); one is kept iff its IoU with every
    already-kept detection is <= the threshold.
    """
    if not (0.0 < iou_threshold < 1.0):
        raise ValueError(f"iou_threshold must be in (0, 1), got {iou_threshold}")
    order = sorted(
        range(len(dets)),
        key=lambda i: (-dets[i].confidence, dets[i].source_model, i),
    )
    kept = []
    for i in order:
        cand = dets[i]
        if all(iou(cand.polygon, k.polygon) <= iou_threshold for k in kept):
            kept.append(cand)
    return kept


def fuse_and_score(model_outputs: list, gt: dict, iou_threshold: float = DEFAULT_NMS_IOU,
                   cfg: MatchConfig = MatchConfig()) -> PrfScore:
    """Pool all models' scored detections per image, NMS, score vs GT.

    ``model_outputs`` is a list of K maps image_id -> list[ScoredDetection];
    ``gt`` maps image_id -> list[Polygon].
    """
    for outputs in model_outputs:
        unknown = set(outputs) - set(gt)
        if unknown:
            raise KeyError(f"model output for unknown image id(s): {sorted(unknown)}")
    per_image = []
    for image_id in sorted(gt):
        pooled = []
        for outputs in model_outputs:
            pooled.extend(outputs.get(image_id, []))
        kept = nms(pooled, iou_threshold)
        per_image.append(
            match_detections([d.polygon for d in kept], gt[image_id], cfg)
        )
    return micro_aggregate(per_image)
