"""Detection-to-ground-truth matching and precision/recall/F scoring."""

from __future__ import annotations

from dataclasses import dataclass

from .geometry import iou

ONE_TO_ONE = "one_to_one"
PAPER_LITERAL = "paper_literal"

F_TIE_TOL = 1e-12


@dataclass(frozen=True)
class EvalCounts:
    n_match: int
    n_det: int
    n_gt: int

    def __post_init__(self):
        if min(self.n_match, self.n_det, self.n_gt) < 0:
            raise ValueError("counts must be non-negative")

    def __add__(self, other: "EvalCounts") -> "EvalCounts":
        return EvalCounts(
            self.n_match + other.n_match,
            self.n_det + other.n_det,
            self.n_gt + other.n_gt,
        )


@dataclass(frozen=True)
class PrfScore:
    precision: float
    recall: float
    f_score: float


@dataclass(frozen=True)
class MatchConfig:
    tau: float = 0.5
    mode: str = ONE_TO_ONE

    def __post_init__(self):
        if not (0.0 < self.tau < 1.0):
            raise ValueError(f"tau must be in (0, 1), got {self.tau}")
        if self.mode not in (ONE_TO_ONE, PAPER_LITERAL):
            raise ValueError(f"unknown match mode {self.mode!r}")


def f_from_pr(precision: float, recall: float) -> float:
    """Harmonic mean of precision and recall; 0 when both are 0."""
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def match_detections(dets, gts, cfg: MatchConfig = MatchConfig()) -> EvalCounts:
    """Count matched detections against ground truth at threshold tau.

    ``paper_literal`` counts a detection as matched iff any GT exceeds
    the IoU threshold (duplicates can all match one GT).  ``one_to_one``
    greedily pairs detections and GT by descending IoU, each side used
    at most once.
    """
    n_det, n_gt = len(dets), len(gts)
    if n_det == 0 or n_gt == 0:
        return EvalCounts(0, n_det, n_gt)
    # bounding-box prefilter: disjoint boxes cannot overlap
    db = [d.bounds() for d in dets]
    gb = [g.bounds() for g in gts]
    ious = [
        [
            iou(d, g)
            if db[i][0] < gb[j][2] and gb[j][0] < db[i][2]
            and db[i][1] < gb[j][3] and gb[j][1] < db[i][3]
            else 0.0
            for j, g in enumerate(gts)
        ]
        for i, d in enumerate(dets)
    ]
    if cfg.mode == PAPER_LITERAL:
        n_match = sum(1 for row in ious if max(row) > cfg.tau)
        return EvalCounts(n_match, n_det, n_gt)
    pairs = sorted(
        ((ious[i][j], i, j) for i in range(n_det) for j in range(n_gt)),
        key=lambda t: (-t[0], t[1], t[2]),
    )
    used_det = [False] * n_det
    used_gt = [False] * n_gt
    n_match = 0
    for v, i, j in pairs:
        if v <= cfg.tau:
            break
        if not used_det[i] and not used_gt[j]:
            used_det[i] = True
            used_gt[j] = True
            n_match += 1
    return EvalCounts(n_match, n_det, n_gt)


def prf(counts: EvalCounts) -> PrfScore:
    p = counts.n_match / counts.n_det if counts.n_det else 0.0
    r = counts.n_match / counts.n_gt if counts.n_gt else 0.0
    return PrfScore(p, r, f_from_pr(p, r))


def micro_aggregate(per_image) -> PrfScore:
    """Dataset P/R/F from summed counts across images."""
    total = EvalCounts(0, 0, 0)
    for c in per_image:
        total = total + c
    return prf(total)


def score_counts(model_outputs: dict, gt: dict, cfg: MatchConfig = MatchConfig()) -> dict:
    """Per-image EvalCounts for one model over a ground-truth map.

    Images present in ``gt`` but absent from ``model_outputs`` score as
    zero detections.  Unknown image ids in ``model_outputs`` are an error.
    """
    unknown = set(model_outputs) - set(gt)
    if unknown:
        raise KeyError(f"model output for unknown image id(s): {sorted(unknown)}")
    return {
        image_id: match_detections(model_outputs.get(image_id, []), gts, cfg)
        for image_id, gts in gt.items()
    }


def score_model(model_outputs: dict, gt: dict, cfg: MatchConfig = MatchConfig()):
    """(per-image PrfScore map, micro-aggregated dataset PrfScore)."""
    counts = score_counts(model_outputs, gt, cfg)
    per_image = {image_id: prf(c) for image_id, c in counts.items()}
    return per_image, micro_aggregate(counts.values())
