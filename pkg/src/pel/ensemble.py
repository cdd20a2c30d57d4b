"""Two-stage predictive-ensemble evaluation, oracle bound, comparison report."""

from __future__ import annotations

from dataclasses import dataclass

from .fusion import DEFAULT_NMS_IOU, fuse_and_score
from .scoring import MatchConfig, PrfScore, match_detections, micro_aggregate, prf
from .selector import SelectorNet, select
from .synthbench import gt_map, polygons_only


@dataclass(frozen=True)
class SelectionTrace:
    image_id: str
    selected_model: int
    f_score: float


def pel_evaluate(net: SelectorNet, extractor, model_outputs: list, scenes: dict,
                 cfg: MatchConfig = MatchConfig()):
    """Per image: select one model from scene features, score only its output.

    ``scenes`` maps image_id -> SceneSample (ground truth and feature
    source).  Returns (dataset PrfScore, list[SelectionTrace]).
    """
    k = len(model_outputs)
    if net.output_dim != k:
        raise ValueError(f"selector has {net.output_dim} outputs but {k} models given")
    per_image = []
    trace = []
    for image_id in sorted(scenes):
        scene = scenes[image_id]
        choice = select(net, extractor.extract(scene))
        dets = model_outputs[choice].get(image_id, [])
        counts = match_detections(dets, scene.visible_polygons(), cfg)
        per_image.append(counts)
        trace.append(SelectionTrace(image_id, choice, prf(counts).f_score))
    return micro_aggregate(per_image), trace


def oracle_choices(model_outputs: list, gt: dict, cfg: MatchConfig = MatchConfig()):
    """Per image: (chosen model index, its EvalCounts, per-model F list).

    Ties and all-zero images resolve to the lowest model index.
    """
    choices = {}
    for image_id in sorted(gt):
        gts = gt[image_id]
        per_model = [
            match_detections(outputs.get(image_id, []), gts, cfg)
            for outputs in model_outputs
        ]
        fs = [prf(c).f_score for c in per_model]
        best = max(range(len(fs)), key=lambda i: (fs[i], -i))
        choices[image_id] = (best, per_model[best], fs)
    return choices


def oracle_evaluate(model_outputs: list, gt: dict, cfg: MatchConfig = MatchConfig()) -> PrfScore:
    """Upper bound: per image, keep the model with maximal per-image F."""
    choices = oracle_choices(model_outputs, gt, cfg)
    return micro_aggregate(counts for _, counts, _ in choices.values())


@dataclass(frozen=True)
class ReportRow:
    method: str
    score: PrfScore


def compare_report(scenes: dict, scored_outputs: list, net: SelectorNet, extractor,
                   cfg: MatchConfig = MatchConfig(), nms_iou: float = DEFAULT_NMS_IOU):
    """Table 'method x (P, R, F)' rows: each base model, NMS, PEL, Oracle."""
    gt = gt_map(scenes.values())
    plain = [polygons_only(o) for o in scored_outputs]
    rows = []
    for i, outputs in enumerate(plain):
        _, score = _score_against(outputs, gt, cfg)
        rows.append(ReportRow(f"model_{i}", score))
    rows.append(ReportRow("nms", fuse_and_score(scored_outputs, gt, nms_iou, cfg)))
    pel_score, _ = pel_evaluate(net, extractor, plain, scenes, cfg)
    rows.append(ReportRow("pel", pel_score))
    rows.append(ReportRow("oracle", oracle_evaluate(plain, gt, cfg)))
    return rows


def _score_against(outputs, gt, cfg):
    per_image = [
        match_detections(outputs.get(image_id, []), gt[image_id], cfg)
        for image_id in sorted(gt)
    ]
    return per_image, micro_aggregate(per_image)


def report_to_dict(rows) -> dict:
    return {
        "rows": [
            {
                "method": r.method,
                "precision": r.score.precision,
                "recall": r.score.recall,
                "f_score": r.score.f_score,
            }
            for r in rows
        ]
    }


def report_from_dict(doc: dict):
    return [
        ReportRow(r["method"], PrfScore(r["precision"], r["recall"], r["f_score"]))
        for r in doc["rows"]
    ]


def format_report(rows) -> str:
    lines = [f"{'method':<12} {'precision':>10} {'recall':>10} {'f_score':>10}"]
    for r in rows:
        lines.append(
            f"{r.method:<12} {r.score.precision:>10.4f} {r.score.recall:>10.4f} "
            f"{r.score.f_score:>10.4f}"
        )
    return "\n".join(lines)
