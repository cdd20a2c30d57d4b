import numpy as np
import pytest

from pel import synthbench as sb
from pel.geometry import Polygon
from pel.labeling import build_dataset
from pel.scoring import MatchConfig
from pel.selector import SceneStatsExtractor, TrainConfig, train

BENCH_SEED = 7
TRAIN_SEED = 0


def random_convex_polygon(rng, n_points=8, scale=1.0, center=(0.0, 0.0)):
    """Convex hull of random points; always a valid CCW convex ring."""
    from scipy.spatial import ConvexHull

    while True:
        pts = rng.uniform(-scale, scale, (n_points, 2)) + center
        hull = ConvexHull(pts)
        verts = pts[hull.vertices]
        try:
            return Polygon(verts)
        except Exception:
            continue


def mc_iou(a: Polygon, b: Polygon, n_samples: int, rng) -> float:
    """Monte-Carlo IoU estimate, independent of the clipping code.

    Samples the joint bounding box and tests half-plane membership
    directly on the vertex rings.
    """
    xs = np.concatenate([a.vertices[:, 0], b.vertices[:, 0]])
    ys = np.concatenate([a.vertices[:, 1], b.vertices[:, 1]])
    pts = np.column_stack(
        [rng.uniform(xs.min(), xs.max(), n_samples), rng.uniform(ys.min(), ys.max(), n_samples)]
    )

    def inside(poly):
        v = poly.vertices
        ok = np.ones(n_samples, dtype=bool)
        for i in range(len(v)):
            p0, p1 = v[i], v[(i + 1) % len(v)]
            e = p1 - p0
            ok &= e[0] * (pts[:, 1] - p0[1]) - e[1] * (pts[:, 0] - p0[0]) >= 0.0
        return ok

    in_a = inside(a)
    in_b = inside(b)
    union = np.count_nonzero(in_a | in_b)
    if union == 0:
        return 0.0
    return np.count_nonzero(in_a & in_b) / union


def build_records(bench, scenes, cfg=MatchConfig()):
    extractor = SceneStatsExtractor()
    gt = sb.gt_map(scenes)
    ids = set(gt)
    plain = [
        {k: v for k, v in sb.polygons_only(o).items() if k in ids}
        for o in bench.detector_outputs
    ]
    feats = {s.image_id: extractor.extract(s).tolist() for s in scenes}
    return build_dataset(gt, plain, feats, cfg), plain


@pytest.fixture(scope="session")
def benchmark():
    return sb.standard_benchmark(BENCH_SEED)


@pytest.fixture(scope="session")
def train_records(benchmark):
    records, _ = build_records(benchmark, benchmark.train_scenes)
    return records


@pytest.fixture(scope="session")
def test_records_and_outputs(benchmark):
    return build_records(benchmark, benchmark.test_scenes)


@pytest.fixture(scope="session")
def trained_net(train_records):
    net, log = train(train_records, TrainConfig(seed=TRAIN_SEED))
    return net, log
