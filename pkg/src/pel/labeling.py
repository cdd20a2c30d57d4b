"""Selector-dataset construction: per-sample best-model targets."""

from __future__ import annotations

from dataclasses import dataclass

from .scoring import MatchConfig, match_detections, prf

F_EQUALITY_TOL = 1e-9


@dataclass(frozen=True)
class LabelRecord:
    image_id: str
    features: tuple
    f_scores: tuple
    labels: tuple

    def __post_init__(self):
        if len(self.f_scores) != len(self.labels):
            raise ValueError("f_scores and labels must have equal length")


def make_label(f_scores) -> tuple:
    """Bit i is set iff f_scores[i] ties the maximum and the maximum is > 0.

    All-zero scores yield the all-negative label.
    """
    if len(f_scores) == 0:
        raise ValueError("need at least one model score")
    best = max(f_scores)
    if best <= 0.0:
        return tuple(0 for _ in f_scores)
    return tuple(1 if best - f <= F_EQUALITY_TOL else 0 for f in f_scores)


def build_dataset(gt: dict, model_outputs: list, features: dict,
                  cfg: MatchConfig = MatchConfig(), drop_all_zero: bool = False):
    """One LabelRecord per ground-truth image, sorted by image id.

    ``model_outputs`` is a list of K per-model maps image_id -> polygons;
    a missing image in a model's map counts as zero detections.
    All-negative records are kept unless ``drop_all_zero`` is set.
    """
    missing = set(gt) - set(features)
    if missing:
        raise ValueError(f"missing feature vectors for image id(s): {sorted(missing)}")
    dims = {len(v) for v in features.values()}
    if len(dims) > 1:
        raise ValueError(f"inconsistent feature dimensions: {sorted(dims)}")
    records = []
    for image_id in sorted(gt):
        gts = gt[image_id]
        f_scores = tuple(
            prf(match_detections(outputs.get(image_id, []), gts, cfg)).f_score
            for outputs in model_outputs
        )
        labels = make_label(f_scores)
        if drop_all_zero and not any(labels):
            continue
        records.append(
            LabelRecord(
                image_id=image_id,
                features=tuple(float(x) for x in features[image_id]),
                f_scores=f_scores,
                labels=labels,
            )
        )
    return records
