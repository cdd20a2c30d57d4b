import json

import pytest

from pel.cli import main


def write_jsonl(path, rows):
    with open(path, "w") as f:
        for row in rows:
            f.write(json.dumps(row) + "\n")


def sq(x0, y0, side=10.0):
    return [[x0, y0], [x0 + side, y0], [x0 + side, y0 + side], [x0, y0 + side]]


@pytest.fixture
def tiny_data(tmp_path):
    """Two-model toy dataset: model 0 perfect, model 1 blind."""
    gt_rows = [
        {"image_id": "img_0", "regions": [{"polygon": sq(10, 10)}]},
        {"image_id": "img_1", "regions": [{"polygon": sq(40, 40)},
                                          {"polygon": sq(70, 10)}]},
    ]
    det0 = [
        {"image_id": "img_0", "regions": [{"polygon": sq(10, 10), "confidence": 0.9}]},
        {"image_id": "img_1", "regions": [{"polygon": sq(40, 40), "confidence": 0.8},
                                          {"polygon": sq(70, 10), "confidence": 0.7}]},
    ]
    det1 = [
        {"image_id": "img_0", "regions": []},
        {"image_id": "img_1", "regions": []},
    ]
    paths = {}
    for name, rows in (("gt", gt_rows), ("det_0", det0), ("det_1", det1)):
        paths[name] = tmp_path / f"{name}.jsonl"
        write_jsonl(paths[name], rows)
    return tmp_path, paths


def run(capsys, argv):
    code = main(argv)
    return code, capsys.readouterr().out


class TestGen:
    def test_writes_expected_files_and_is_byte_identical(self, tmp_path, capsys):
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        assert main(["gen", "--seed", "3", "--out", str(out_a)]) == 0
        assert main(["gen", "--seed", "3", "--out", str(out_b)]) == 0
        names = ["gt.jsonl", "det_0.jsonl", "det_1.jsonl", "det_2.jsonl", "splits.json"]
        for name in names:
            fa, fb = out_a / name, out_b / name
            assert fa.exists()
            assert fa.read_bytes() == fb.read_bytes()

    def test_unwritable_path_exits_2(self, capsys):
        assert main(["gen", "--seed", "1", "--out", "/proc/nope/dir"]) == 2


class TestEval:
    def test_perfect_detector(self, tiny_data, capsys):
        _, paths = tiny_data
        code, out = run(capsys, ["eval", "--gt", str(paths["gt"]),
                                 "--det", str(paths["det_0"])])
        assert code == 0
        assert "f_score=1.0000" in out

    def test_pr_pair_arithmetic(self, capsys):
        code, out = run(capsys, ["eval", "--pr", "0.855", "0.820"])
        assert code == 0
        assert "f_score=0.8371" in out

    def test_missing_file_exits_2(self, capsys):
        assert main(["eval", "--gt", "/no/such.jsonl", "--det", "/no/such2.jsonl"]) == 2

    def test_malformed_file_exits_3(self, tmp_path, capsys):
        bad = tmp_path / "bad.jsonl"
        bad.write_text('{"image_id": "a"}\n')
        assert main(["eval", "--gt", str(bad), "--det", str(bad)]) == 3


class TestLabels:
    def test_extract_and_schema(self, tiny_data, capsys):
        tmp_path, paths = tiny_data
        out = tmp_path / "labels.jsonl"
        code, printed = run(capsys, [
            "labels", "--gt", str(paths["gt"]),
            "--det", str(paths["det_0"]), "--det", str(paths["det_1"]),
            "--extract", "--out", str(out),
        ])
        assert code == 0
        rows = [json.loads(line) for line in out.read_text().splitlines()]
        assert [r["image_id"] for r in rows] == ["img_0", "img_1"]
        assert all(r["labels"] == [1, 0] for r in rows)
        assert all(len(r["features"]) == 16 for r in rows)

    def test_needs_features_or_extract(self, tiny_data, capsys):
        tmp_path, paths = tiny_data
        code = main(["labels", "--gt", str(paths["gt"]), "--det", str(paths["det_0"]),
                     "--out", str(tmp_path / "x.jsonl")])
        assert code == 3

    def test_explicit_features_file(self, tiny_data, capsys):
        tmp_path, paths = tiny_data
        feats = tmp_path / "features.json"
        feats.write_text(json.dumps({"img_0": [1.0, 2.0], "img_1": [3.0, 4.0]}))
        out = tmp_path / "labels.jsonl"
        code = main(["labels", "--gt", str(paths["gt"]), "--det", str(paths["det_0"]),
                     "--features", str(feats), "--out", str(out)])
        assert code == 0
        rows = [json.loads(line) for line in out.read_text().splitlines()]
        assert rows[0]["features"] == [1.0, 2.0]


@pytest.fixture
def trained_weights(tiny_data, tmp_path):
    tmp_path, paths = tiny_data
    labels = tmp_path / "labels.jsonl"
    main(["labels", "--gt", str(paths["gt"]),
          "--det", str(paths["det_0"]), "--det", str(paths["det_1"]),
          "--extract", "--out", str(labels)])
    cfg = tmp_path / "train.json"
    cfg.write_text(json.dumps({"lr_decay_epochs": 2, "lr_floor": 1e-4, "seed": 1}))
    weights = tmp_path / "weights.json"
    assert main(["train", "--dataset", str(labels), "--config", str(cfg),
                 "--out", str(weights)]) == 0
    return tmp_path, paths, weights


class TestTrain:
    def test_deterministic_weight_files(self, trained_weights):
        tmp_path, paths, weights = trained_weights
        again = tmp_path / "weights2.json"
        cfg = tmp_path / "train.json"
        assert main(["train", "--dataset", str(tmp_path / "labels.jsonl"),
                     "--config", str(cfg), "--out", str(again)]) == 0
        assert weights.read_bytes() == again.read_bytes()

    def test_writes_training_log_with_lr_schedule(self, trained_weights):
        tmp_path, _, weights = trained_weights
        log = json.loads(weights.with_suffix(".log.json").read_text())
        lrs = [e["lr"] for e in log]
        assert lrs == [1e-3, 1e-3, 1e-4, 1e-4]

    def test_unknown_config_key_exits_3(self, tiny_data, capsys):
        tmp_path, paths = tiny_data
        labels = tmp_path / "labels.jsonl"
        main(["labels", "--gt", str(paths["gt"]), "--det", str(paths["det_0"]),
              "--extract", "--out", str(labels)])
        cfg = tmp_path / "bad.json"
        cfg.write_text(json.dumps({"learning_rate": 0.1}))
        assert main(["train", "--dataset", str(labels), "--config", str(cfg),
                     "--out", str(tmp_path / "w.json")]) == 3

    def test_non_finite_loss_exits_4(self, tmp_path, capsys):
        labels = tmp_path / "labels.jsonl"
        write_jsonl(labels, [
            {"image_id": "a", "features": [float("nan"), 0.0],
             "f_scores": [1.0], "labels": [1]},
        ])
        # NaN features survive JSON via Python's non-strict parser
        assert main(["train", "--dataset", str(labels),
                     "--out", str(tmp_path / "w.json")]) == 4


class TestEnsembleCommands:
    def test_pel_nms_oracle_report(self, trained_weights, capsys):
        tmp_path, paths, weights = trained_weights
        base = ["--gt", str(paths["gt"]),
                "--det", str(paths["det_0"]), "--det", str(paths["det_1"])]
        code, out = run(capsys, ["pel", *base, "--weights", str(weights)])
        assert code == 0 and "pel:" in out
        code, out = run(capsys, ["nms", *base])
        assert code == 0 and "nms:" in out
        code, out = run(capsys, ["oracle", *base])
        assert code == 0 and "f_score=1.0000" in out
        report_json = tmp_path / "report.json"
        code, out = run(capsys, ["report", *base, "--weights", str(weights),
                                 "--out", str(report_json)])
        assert code == 0
        doc = json.loads(report_json.read_text())
        methods = [r["method"] for r in doc["rows"]]
        assert methods == ["model_0", "model_1", "nms", "pel", "oracle"]
        assert doc["rows"][-1]["f_score"] == 1.0

    def test_mismatched_k_exits_3(self, trained_weights, capsys):
        tmp_path, paths, weights = trained_weights
        code = main(["pel", "--gt", str(paths["gt"]), "--det", str(paths["det_0"]),
                     "--weights", str(weights)])
        assert code == 3
