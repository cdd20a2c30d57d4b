import collections

import numpy as np
import pytest

from conftest import BENCH_SEED
from pel import synthbench as sb
from pel.geometry import area
from pel.scoring import MatchConfig, score_model


class TestGenerateScenes:
    def test_deterministic(self):
        a = sb.generate_scenes(50, seed=3)
        b = sb.generate_scenes(50, seed=3)
        for sa, sc in zip(a, b):
            assert sa.image_id == sc.image_id
            assert len(sa.gt_regions) == len(sc.gt_regions)
            for ra, rb in zip(sa.gt_regions, sc.gt_regions):
                assert np.array_equal(ra.polygon.vertices, rb.polygon.vertices)

    def test_regime_proportions(self):
        scenes = sb.generate_scenes(1000, seed=5)
        counts = collections.Counter(s.gt_regions[0].regime for s in scenes)
        for regime in sb.REGIMES:
            assert counts[regime] / 1000 == pytest.approx(1 / 3, abs=0.03)

    def test_regions_within_extent(self):
        for scene in sb.generate_scenes(200, seed=9):
            w, h = scene.extent
            for r in scene.gt_regions:
                x0, y0, x1, y1 = r.polygon.bounds()
                assert x0 >= -1e-9 and y0 >= -1e-9
                assert x1 <= w + 1e-9 and y1 <= h + 1e-9

    def test_orientation_attribute_consistent(self):
        import math

        for scene in sb.generate_scenes(50, seed=2):
            for r in scene.gt_regions:
                v = r.polygon.vertices
                e = v[1] - v[0]
                ang = math.degrees(math.atan2(e[1], e[0]))
                diff = (ang - r.orientation + 90.0) % 180.0 - 90.0
                assert abs(diff) < 1e-6

    def test_n_must_be_positive(self):
        with pytest.raises(ValueError):
            sb.generate_scenes(0, seed=1)


class TestSimulateDetector:
    def perfect_profile(self):
        return sb.DetectorProfile(
            name="perfect",
            recall_by_regime={r: 1.0 for r in sb.REGIMES},
            jitter_by_regime={r: 0.0 for r in sb.REGIMES},
            fp_rate=0.0,
        )

    def blind_profile(self):
        return sb.DetectorProfile(
            name="blind",
            recall_by_regime={r: 0.0 for r in sb.REGIMES},
            jitter_by_regime={r: 0.0 for r in sb.REGIMES},
            fp_rate=0.0,
        )

    def test_perfect_detector_scores_one(self):
        scenes = sb.generate_scenes(20, seed=4)
        outputs = sb.simulate_detector(self.perfect_profile(), scenes, seed=1)
        _, score = score_model(sb.polygons_only(outputs), sb.gt_map(scenes))
        assert score.f_score == 1.0

    def test_zero_recall_scores_zero(self):
        scenes = sb.generate_scenes(20, seed=4)
        outputs = sb.simulate_detector(self.blind_profile(), scenes, seed=1)
        _, score = score_model(sb.polygons_only(outputs), sb.gt_map(scenes))
        assert score.f_score == 0.0

    def test_deterministic(self):
        scenes = sb.generate_scenes(20, seed=4)
        profile = sb.standard_profiles()[0]
        a = sb.simulate_detector(profile, scenes, seed=2)
        b = sb.simulate_detector(profile, scenes, seed=2)
        for k in a:
            assert len(a[k]) == len(b[k])
            for da, db in zip(a[k], b[k]):
                assert da.confidence == db.confidence
                assert np.array_equal(da.polygon.vertices, db.polygon.vertices)

    def test_jitter_preserves_validity(self):
        rng = np.random.default_rng(0)
        poly = sb.make_rect(50, 50, 10, 5, 30.0)
        for _ in range(100):
            jittered = sb.jitter_polygon(poly, 0.5, rng)
            assert area(jittered) > 0  # constructor enforced convexity

    def test_specialist_wins_its_regime(self):
        scenes = [s for s in sb.generate_scenes(300, seed=6)
                  if s.gt_regions[0].regime == sb.SMALL_DENSE]
        profiles = sb.standard_profiles()
        cfg = MatchConfig()
        gt = sb.gt_map(scenes)
        per = []
        for i, p in enumerate(profiles):
            outputs = sb.simulate_detector(p, scenes, seed=100 + i)
            per_image, _ = score_model(sb.polygons_only(outputs), gt, cfg)
            per.append(per_image)
        wins = sum(
            1 for iid in gt
            if per[0][iid].f_score >= max(per[1][iid].f_score, per[2][iid].f_score)
        )
        assert wins / len(gt) >= 0.8


class TestStandardBenchmark:
    def test_split_sizes_and_disjointness(self, benchmark):
        assert len(benchmark.train_scenes) == 1000
        assert len(benchmark.test_scenes) == 300
        train_ids = {s.image_id for s in benchmark.train_scenes}
        test_ids = {s.image_id for s in benchmark.test_scenes}
        assert not (train_ids & test_ids)

    def test_detector_f_scores_comparable(self, benchmark):
        gt = sb.gt_map(benchmark.scenes)
        fs = []
        for outputs in benchmark.detector_outputs:
            _, s = score_model(sb.polygons_only(outputs), gt)
            fs.append(s.f_score)
        assert max(fs) - min(fs) <= 0.05

    def test_each_detector_best_on_enough_test_scenes(self, benchmark):
        gt = sb.gt_map(benchmark.test_scenes)
        ids = set(gt)
        per = []
        for outputs in benchmark.detector_outputs:
            m = {k: v for k, v in sb.polygons_only(outputs).items() if k in ids}
            per_image, _ = score_model(m, gt)
            per.append(per_image)
        best = collections.Counter()
        for iid in gt:
            fs = [per[i][iid].f_score for i in range(3)]
            best[fs.index(max(fs))] += 1
        for i in range(3):
            assert best[i] / len(gt) >= 0.20

    def test_oracle_complementarity_margin(self, benchmark):
        from pel.ensemble import oracle_evaluate

        gt = sb.gt_map(benchmark.test_scenes)
        ids = set(gt)
        plain = [
            {k: v for k, v in sb.polygons_only(o).items() if k in ids}
            for o in benchmark.detector_outputs
        ]
        oracle = oracle_evaluate(plain, gt)
        best = max(score_model(m, gt)[1].f_score for m in plain)
        assert oracle.f_score - best >= 0.03

    def test_full_determinism(self):
        a = sb.standard_benchmark(BENCH_SEED)
        b = sb.standard_benchmark(BENCH_SEED)
        for oa, ob in zip(a.detector_outputs, b.detector_outputs):
            assert set(oa) == set(ob)
            for k in oa:
                assert [d.confidence for d in oa[k]] == [d.confidence for d in ob[k]]


def test_profile_validation():
    with pytest.raises(ValueError):
        sb.DetectorProfile("bad", {sb.ROTATED: 1.5}, {}, 0.0)
    with pytest.raises(ValueError):
        sb.DetectorProfile("bad", {}, {sb.ROTATED: -1.0}, 0.0)
    with pytest.raises(ValueError):
        sb.DetectorProfile("bad", {}, {}, -0.5)
