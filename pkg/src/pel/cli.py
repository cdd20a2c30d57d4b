"""Command-line surface for the four-step ensemble-selection workflow.

Exit codes: 0 success, 2 I/O error, 3 schema/shape error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import ensemble, io, synthbench
from .fusion import fuse_and_score
from .labeling import build_dataset
from .scoring import MatchConfig, f_from_pr, score_model
from .selector import (
    SceneStatsExtractor,
    TrainConfig,
    TrainingDivergedError,
    load_net,
    save_net,
    selector_accuracy,
    train,
)

EXIT_IO = 2
EXIT_SCHEMA = 3
EXIT_NUMERIC = 4


def _match_cfg(args) -> MatchConfig:
    return MatchConfig(tau=args.tau, mode=args.match_mode)


def _print_score(name, score):
    print(f"{name}: precision={score.precision:.4f} recall={score.recall:.4f} "
          f"f_score={score.f_score:.4f}")


def _load_models(det_paths):
    return [io.load_detections(path, source_model=i) for i, path in enumerate(det_paths)]


def cmd_gen(args):
    bench = synthbench.standard_benchmark(args.seed)
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    io.write_gt(out / "gt.jsonl", bench.scenes)
    ids = [s.image_id for s in bench.scenes]
    for i, outputs in enumerate(bench.detector_outputs):
        io.write_detections(out / f"det_{i}.jsonl", outputs, image_ids=ids)
    with open(out / "splits.json", "w") as f:
        json.dump(
            {
                "train": [s.image_id for s in bench.train_scenes],
                "test": [s.image_id for s in bench.test_scenes],
            },
            f,
        )
        f.write("\n")
    n_regions = sum(len(s.gt_regions) for s in bench.scenes)
    print(f"wrote {len(bench.scenes)} scenes ({len(bench.train_scenes)} train / "
          f"{len(bench.test_scenes)} test), {n_regions} regions, "
          f"{len(bench.detector_outputs)} detectors to {out}")
    return 0


def cmd_eval(args):
    if args.pr is not None:
        p, r = args.pr
        print(f"precision={p:.4f} recall={r:.4f} f_score={f_from_pr(p, r):.4f}")
        return 0
    if args.gt is None or args.det is None:
        raise io.SchemaError("eval requires --gt and --det (or --pr P R)")
    gt = io.gt_polygons(io.load_gt(args.gt))
    dets = synthbench.polygons_only(io.load_detections(args.det[0]))
    cfg = _match_cfg(args)
    _, score = score_model(dets, gt, cfg)
    _print_score("dataset", score)
    doc = {"precision": score.precision, "recall": score.recall, "f_score": score.f_score}
    if cfg.mode == "paper_literal" and score.recall > 1.0:
        doc["warning"] = "paper_literal matching: recall exceeds 1 (duplicate matches)"
        print(doc["warning"])
    print(json.dumps(doc))
    return 0


def cmd_labels(args):
    gt_regions = io.load_gt(args.gt)
    gt = io.gt_polygons(gt_regions)
    models = [synthbench.polygons_only(m) for m in _load_models(args.det)]
    if args.features is not None:
        features = io.load_features(args.features)
    elif args.extract:
        extractor = SceneStatsExtractor()
        scenes = io.scenes_from_gt(gt_regions, extent=tuple(args.extent))
        features = {k: extractor.extract(s).tolist() for k, s in scenes.items()}
    else:
        raise io.SchemaError("labels requires --features FILE or --extract")
    records = build_dataset(gt, models, features, _match_cfg(args),
                            drop_all_zero=args.drop_all_zero)
    io.write_label_records(args.out, records)
    n_multi = sum(1 for r in records if sum(r.labels) >= 2)
    print(f"wrote {len(records)} records ({n_multi} multi-label) to {args.out}")
    return 0


def cmd_train(args):
    records = io.load_label_records(args.dataset)
    cfg_kwargs = {}
    if args.config is not None:
        with open(args.config) as f:
            doc = json.load(f)
        unknown = set(doc) - set(TrainConfig.__dataclass_fields__)
        if unknown:
            raise io.SchemaError(f"unknown train-config keys: {sorted(unknown)}")
        cfg_kwargs = doc
    if args.seed is not None:
        cfg_kwargs["seed"] = args.seed
    cfg = TrainConfig(**cfg_kwargs)
    net, log = train(records, cfg)
    save_net(net, args.out, cfg=cfg)
    log_path = args.log if args.log is not None else args.out.with_suffix(".log.json")
    with open(log_path, "w") as f:
        json.dump(log, f)
        f.write("\n")
    acc = selector_accuracy(net, records)
    print(f"trained {len(log)} epochs, final lr {log[-1]['lr']:.0e}, "
          f"train accuracy {acc:.4f}; weights -> {args.out}")
    return 0


def _load_eval_inputs(args):
    gt_regions = io.load_gt(args.gt)
    scored = _load_models(args.det)
    gt = io.gt_polygons(gt_regions)
    plain = [synthbench.polygons_only(m) for m in scored]
    return gt_regions, gt, scored, plain


def cmd_pel(args):
    gt_regions, _, _, plain = _load_eval_inputs(args)
    net = load_net(args.weights)
    if net.output_dim != len(plain):
        raise io.SchemaError(
            f"selector expects {net.output_dim} models but {len(plain)} det files given"
        )
    scenes = io.scenes_from_gt(gt_regions, extent=tuple(args.extent))
    score, trace = ensemble.pel_evaluate(net, SceneStatsExtractor(), plain, scenes,
                                         _match_cfg(args))
    _print_score("pel", score)
    print(json.dumps({
        "precision": score.precision, "recall": score.recall, "f_score": score.f_score,
        "selections": {t.image_id: t.selected_model for t in trace},
    }))
    return 0


def cmd_nms(args):
    _, gt, scored, _ = _load_eval_inputs(args)
    score = fuse_and_score(scored, gt, args.nms_iou, _match_cfg(args))
    _print_score("nms", score)
    return 0


def cmd_oracle(args):
    _, gt, _, plain = _load_eval_inputs(args)
    score = ensemble.oracle_evaluate(plain, gt, _match_cfg(args))
    _print_score("oracle", score)
    return 0


def cmd_report(args):
    gt_regions, _, scored, plain = _load_eval_inputs(args)
    net = load_net(args.weights)
    if net.output_dim != len(plain):
        raise io.SchemaError(
            f"selector expects {net.output_dim} models but {len(plain)} det files given"
        )
    scenes = io.scenes_from_gt(gt_regions, extent=tuple(args.extent))
    rows = ensemble.compare_report(scenes, scored, net, SceneStatsExtractor(),
                                   _match_cfg(args), args.nms_iou)
    print(ensemble.format_report(rows))
    if args.out is not None:
        with open(args.out, "w") as f:
            json.dump(ensemble.report_to_dict(rows), f)
            f.write("\n")
    return 0


def _add_match_args(p):
    p.add_argument("--tau", type=float, default=0.5)
    p.add_argument("--match-mode", choices=["one_to_one", "paper_literal"],
                   default="one_to_one")


def _add_eval_io_args(p):
    from pathlib import Path

    p.add_argument("--gt", type=Path, required=True)
    p.add_argument("--det", type=Path, action="append", required=True,
                   help="detections file; repeat once per model")
    p.add_argument("--extent", type=float, nargs=2, default=list(io.DEFAULT_EXTENT))
    _add_match_args(p)


def build_parser():
    from pathlib import Path

    parser = argparse.ArgumentParser(prog="pel", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate the synthetic benchmark")
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("eval", help="score one detections file against ground truth")
    p.add_argument("--gt", type=Path)
    p.add_argument("--det", type=Path, action="append")
    p.add_argument("--pr", type=float, nargs=2, metavar=("P", "R"),
                   help="print the F-score of a precision/recall pair")
    _add_match_args(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("labels", help="build the selector dataset")
    p.add_argument("--gt", type=Path, required=True)
    p.add_argument("--det", type=Path, action="append", required=True)
    p.add_argument("--features", type=Path)
    p.add_argument("--extract", action="store_true",
                   help="compute scene-statistics features from the ground truth")
    p.add_argument("--extent", type=float, nargs=2, default=list(io.DEFAULT_EXTENT))
    p.add_argument("--drop-all-zero", action="store_true")
    p.add_argument("--out", type=Path, required=True)
    _add_match_args(p)
    p.set_defaults(func=cmd_labels)

    p = sub.add_parser("train", help="train the selector on a label dataset")
    p.add_argument("--dataset", type=Path, required=True)
    p.add_argument("--config", type=Path)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--log", type=Path)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("pel", help="two-stage ensemble evaluation")
    _add_eval_io_args(p)
    p.add_argument("--weights", type=Path, required=True)
    p.set_defaults(func=cmd_pel)

    p = sub.add_parser("nms", help="pooled-NMS fusion baseline")
    _add_eval_io_args(p)
    p.add_argument("--nms-iou", type=float, default=0.5)
    p.set_defaults(func=cmd_nms)

    p = sub.add_parser("oracle", help="perfect-selector upper bound")
    _add_eval_io_args(p)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("report", help="full comparison table")
    _add_eval_io_args(p)
    p.add_argument("--weights", type=Path, required=True)
    p.add_argument("--nms-iou", type=float, default=0.5)
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except TrainingDivergedError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except io.SchemaError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_SCHEMA
    except (ValueError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_SCHEMA
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
