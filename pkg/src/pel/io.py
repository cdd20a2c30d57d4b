"""JSON-lines wire formats shared by the CLI, generator, and library."""

from __future__ import annotations

import json
import math

from .fusion import ScoredDetection
from .geometry import Polygon, PolygonError
from .labeling import LabelRecord
from .synthbench import Region, SceneSample

DEFAULT_EXTENT = (100.0, 100.0)


class SchemaError(ValueError):
    """Input file fails the wire-format schema."""


def _require(cond, msg):
    if not cond:
        raise SchemaError(msg)


def _parse_polygon(obj, where):
    _require(isinstance(obj, list) and len(obj) >= 3, f"{where}: polygon needs >= 3 points")
    try:
        return Polygon(obj)
    except PolygonError as e:
        raise SchemaError(f"{where}: {e}") from e


def _iter_jsonl(path):
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            try:
                yield lineno, json.loads(line)
            except json.JSONDecodeError as e:
                raise SchemaError(f"{path}:{lineno}: invalid JSON ({e})") from e


def load_gt(path) -> dict:
    """image_id -> list[(Polygon, dont_care)] from a ground-truth JSONL file."""
    out = {}
    for lineno, obj in _iter_jsonl(path):
        where = f"{path}:{lineno}"
        _require(isinstance(obj, dict) and "image_id" in obj and "regions" in obj,
                 f"{where}: expected object with image_id and regions")
        regions = []
        for r in obj["regions"]:
            _require(isinstance(r, dict) and "polygon" in r, f"{where}: region needs a polygon")
            regions.append((_parse_polygon(r["polygon"], where), bool(r.get("dont_care", False))))
        _require(obj["image_id"] not in out, f"{where}: duplicate image_id {obj['image_id']!r}")
        out[obj["image_id"]] = regions
    return out


def load_detections(path, source_model: int = 0) -> dict:
    """image_id -> list[ScoredDetection] from a detections JSONL file."""
    out = {}
    for lineno, obj in _iter_jsonl(path):
        where = f"{path}:{lineno}"
        _require(isinstance(obj, dict) and "image_id" in obj and "regions" in obj,
                 f"{where}: expected object with image_id and regions")
        dets = []
        for r in obj["regions"]:
            _require(isinstance(r, dict) and "polygon" in r, f"{where}: region needs a polygon")
            conf = float(r.get("confidence", 1.0))
            _require(0.0 <= conf <= 1.0 and math.isfinite(conf),
                     f"{where}: confidence out of [0, 1]")
            dets.append(ScoredDetection(_parse_polygon(r["polygon"], where), conf, source_model))
        _require(obj["image_id"] not in out, f"{where}: duplicate image_id {obj['image_id']!r}")
        out[obj["image_id"]] = dets
    return out


def gt_polygons(gt: dict) -> dict:
    """Drop don't-care regions, keep polygons only."""
    return {k: [p for p, dc in v if not dc] for k, v in gt.items()}


def write_gt(path, scenes):
    with open(path, "w") as f:
        for scene in scenes:
            obj = {
                "image_id": scene.image_id,
                "regions": [
                    {"polygon": r.polygon.vertices.tolist(), "dont_care": r.dont_care}
                    for r in scene.gt_regions
                ],
            }
            f.write(json.dumps(obj) + "\n")


def write_detections(path, outputs: dict, image_ids=None):
    ids = list(image_ids) if image_ids is not None else sorted(outputs)
    with open(path, "w") as f:
        for image_id in ids:
            obj = {
                "image_id": image_id,
                "regions": [
                    {"polygon": d.polygon.vertices.tolist(), "confidence": d.confidence}
                    for d in outputs.get(image_id, [])
                ],
            }
            f.write(json.dumps(obj) + "\n")


def scenes_from_gt(gt: dict, extent=DEFAULT_EXTENT) -> dict:
    """Rebuild SceneSamples from an ingested ground-truth map.

    Regime labels are not part of the wire format; reconstructed regions
    carry an "unknown" regime, which feature extraction does not use.
    """
    scenes = {}
    for image_id, regions in gt.items():
        scenes[image_id] = SceneSample(
            image_id=image_id,
            extent=tuple(extent),
            gt_regions=[
                Region(polygon=p, regime="unknown", orientation=0.0, dont_care=dc)
                for p, dc in regions
            ],
        )
    return scenes


def write_label_records(path, records):
    with open(path, "w") as f:
        for r in records:
            obj = {
                "image_id": r.image_id,
                "features": list(r.features),
                "f_scores": list(r.f_scores),
                "labels": list(r.labels),
            }
            f.write(json.dumps(obj) + "\n")


def load_label_records(path):
    records = []
    for lineno, obj in _iter_jsonl(path):
        where = f"{path}:{lineno}"
        _require(
            isinstance(obj, dict)
            and all(k in obj for k in ("image_id", "features", "f_scores", "labels")),
            f"{where}: expected image_id/features/f_scores/labels",
        )
        _require(all(b in (0, 1) for b in obj["labels"]), f"{where}: labels must be bits")
        records.append(
            LabelRecord(
                image_id=obj["image_id"],
                features=tuple(float(x) for x in obj["features"]),
                f_scores=tuple(float(x) for x in obj["f_scores"]),
                labels=tuple(int(b) for b in obj["labels"]),
            )
        )
    return records


def load_features(path) -> dict:
    with open(path) as f:
        doc = json.load(f)
    _require(isinstance(doc, dict), f"{path}: expected an object of image_id -> features")
    return {k: [float(x) for x in v] for k, v in doc.items()}
