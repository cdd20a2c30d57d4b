"""Multi-label model selector: feature extraction, MLP, balanced BCE, OHEM."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from typing import Protocol

import numpy as np

from .geometry import Polygon, area
from .synthbench import SceneSample

PROB_CLAMP = 1e-7
DEFAULT_HIDDEN = (32, 32)


class TrainingDivergedError(RuntimeError):
    """Non-finite loss encountered during training."""


@dataclass
class TrainConfig:
    batch_size: int = 16
    momentum: float = 0.9
    weight_decay: float = 5e-4
    lr_initial: float = 1e-3
    lr_decay_factor: float = 0.1
    lr_decay_epochs: int = 20
    lr_floor: float = 1e-6
    ohem_fraction: float = 0.5
    beta_clamp: float = 0.05
    p_mask_initial: float = 0.3
    p_mask_final: float = 0.0
    seed: int = 0

    def learning_rates(self):
        """Per-epoch learning rates; schedule stops once lr drops below the floor."""
        rates = []
        e = 0
        while True:
            lr = self.lr_initial * self.lr_decay_factor ** (e // self.lr_decay_epochs)
            if lr < self.lr_floor:
                break
            rates.append(lr)
            e += 1
        return rates


class FeatureExtractor(Protocol):
    dimension: int

    def extract(self, sample: SceneSample) -> np.ndarray: ...


def _longest_edge(poly: Polygon):
    v = poly.vertices
    edges = np.roll(v, -1, axis=0) - v
    lengths = np.linalg.norm(edges, axis=1)
    k = int(np.argmax(lengths))
    return edges[k], float(lengths[k])


class SceneStatsExtractor:
    """Handcrafted 16-d scene descriptor over non-don't-care regions.

    Captures region count, normalized-area statistics, aspect ratios,
    orientations, coverage, and the scene aspect; padded with zeros.
    """

    dimension = 16

    def extract(self, sample: SceneSample) -> np.ndarray:
        w, h = sample.extent
        scene_area = w * h
        polys = sample.visible_polygons()
        out = np.zeros(self.dimension)
        out[10] = w / h
        if not polys:
            return out
        areas = np.array([area(p) for p in polys]) / scene_area
        aspects = []
        angles = []
        for p in polys:
            e, length = _longest_edge(p)
            short = area(p) / length
            aspects.append(length / short)
            ang = math.degrees(math.atan2(e[1], e[0])) % 90.0
            angles.append(min(ang, 90.0 - ang) / 45.0)  # axis distance, scaled to [0, 1]
        aspects = np.array(aspects)
        angles = np.array(angles)
        out[0] = math.log1p(len(polys))
        out[1:5] = [areas.mean(), areas.std(), areas.min(), areas.max()]
        out[5:7] = [math.log1p(aspects.mean()), aspects.std()]
        out[7:9] = [angles.mean(), angles.std()]
        out[9] = float(areas.sum())  # covered fraction of the scene
        return out


class SelectorNet:
    """Fully-connected net, rectified-linear hidden units, sigmoid outputs."""

    def __init__(self, layer_dims, weights=None, biases=None, seed: int = 0):
        self.layer_dims = list(int(d) for d in layer_dims)
        if len(self.layer_dims) < 2 or any(d < 1 for d in self.layer_dims):
            raise ValueError(f"bad layer dims {layer_dims}")
        if weights is None:
            rng = np.random.default_rng(seed)
            self.weights = []
            self.biases = []
            for fan_in, fan_out in zip(self.layer_dims, self.layer_dims[1:]):
                limit = math.sqrt(6.0 / (fan_in + fan_out))
                self.weights.append(rng.uniform(-limit, limit, (fan_in, fan_out)))
                self.biases.append(np.zeros(fan_out))
        else:
            self.weights = [np.asarray(w, dtype=float) for w in weights]
            self.biases = [np.asarray(b, dtype=float) for b in biases]
            shapes = [w.shape for w in self.weights]
            expect = list(zip(self.layer_dims, self.layer_dims[1:]))
            if shapes != expect:
                raise ValueError(f"weight shapes {shapes} do not match dims {expect}")

    @property
    def input_dim(self):
        return self.layer_dims[0]

    @property
    def output_dim(self):
        return self.layer_dims[-1]

    def forward_full(self, x: np.ndarray):
        """Activations of every layer for a (B, D) batch; last entry is sigmoid."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.input_dim:
            raise ValueError(f"feature dim {x.shape[1]} != net input dim {self.input_dim}")
        acts = [x]
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = acts[-1] @ w + b
            if i < len(self.weights) - 1:
                acts.append(np.maximum(z, 0.0))
            else:
                acts.append(1.0 / (1.0 + np.exp(-z)))
        return acts


def forward(net: SelectorNet, x) -> np.ndarray:
    """Sigmoid outputs in (0, 1) for a single feature vector."""
    return net.forward_full(np.asarray(x, dtype=float).reshape(1, -1))[-1][0]


def select(net: SelectorNet, x) -> int:
    """Index of the highest-scoring model; ties go to the lowest index."""
    return int(np.argmax(forward(net, x)))


def compute_beta(batch_targets: np.ndarray, eps: float = 0.05) -> np.ndarray:
    """Per-output positive weight: 1 - positive fraction, clamped to [eps, 1-eps]."""
    t = np.atleast_2d(np.asarray(batch_targets, dtype=float))
    beta = 1.0 - t.mean(axis=0)
    return np.clip(beta, eps, 1.0 - eps)


def class_balanced_bce(predictions: np.ndarray, targets: np.ndarray, betas: np.ndarray):
    """Summed class-balanced BCE over the K outputs of one sample.

    Returns (loss, gradient w.r.t. the pre-sigmoid logits).
    """
    p = np.clip(np.asarray(predictions, dtype=float), PROB_CLAMP, 1.0 - PROB_CLAMP)
    y = np.asarray(targets, dtype=float)
    b = np.asarray(betas, dtype=float)
    loss = float(np.sum(-b * y * np.log(p) - (1.0 - b) * (1.0 - y) * np.log(1.0 - p)))
    dlogits = -b * y * (1.0 - p) + (1.0 - b) * (1.0 - y) * p
    return loss, dlogits


def _batch_losses(probs: np.ndarray, targets: np.ndarray, betas: np.ndarray):
    """Vectorized per-sample loss and dL/dlogits for a (B, K) batch."""
    p = np.clip(probs, PROB_CLAMP, 1.0 - PROB_CLAMP)
    y = targets
    b = betas[None, :]
    losses = np.sum(-b * y * np.log(p) - (1.0 - b) * (1.0 - y) * np.log(1.0 - p), axis=1)
    dlogits = -b * y * (1.0 - p) + (1.0 - b) * (1.0 - y) * p
    return losses, dlogits


def ohem_filter(per_sample_losses, fraction: float) -> np.ndarray:
    """Indices of the ceil(fraction * B) largest losses, ties to lower index."""
    if not (0.0 < fraction <= 1.0):
        raise ValueError(f"fraction must be in (0, 1], got {fraction}")
    losses = np.asarray(per_sample_losses, dtype=float)
    n_keep = math.ceil(fraction * len(losses))
    order = sorted(range(len(losses)), key=lambda i: (-losses[i], i))
    return np.array(sorted(order[:n_keep]), dtype=int)


def rotate_scene(sample: SceneSample, angle_deg: float) -> SceneSample:
    """Rotate all regions about the scene centre; extent unchanged."""
    cx, cy = sample.extent[0] / 2.0, sample.extent[1] / 2.0
    t = math.radians(angle_deg)
    rot = np.array([[math.cos(t), -math.sin(t)], [math.sin(t), math.cos(t)]])
    regions = []
    for r in sample.gt_regions:
        v = (r.polygon.vertices - (cx, cy)) @ rot.T + (cx, cy)
        regions.append(replace(r, polygon=Polygon(v), orientation=r.orientation + angle_deg))
    return SceneSample(sample.image_id, sample.extent, regions)


def crop_scene(sample: SceneSample, window) -> SceneSample:
    """Restrict the scene to (x0, y0, w, h); all regions must fit the window."""
    x0, y0, w, h = window
    regions = []
    for r in sample.gt_regions:
        bx0, by0, bx1, by1 = r.polygon.bounds()
        if bx0 < x0 or by0 < y0 or bx1 > x0 + w or by1 > y0 + h:
            raise ValueError("crop window truncates a ground-truth region")
        regions.append(replace(r, polygon=Polygon(r.polygon.vertices - (x0, y0))))
    return SceneSample(sample.image_id, (w, h), regions)


def augment(sample: SceneSample, rng: np.random.Generator, p_mask: float) -> SceneSample:
    """Random rotation, truncation-free crop, and don't-care masking.

    Falls back to the rotation-only sample when no valid crop window is
    found within 50 attempts.
    """
    rotated = rotate_scene(sample, rng.uniform(-15.0, 15.0))
    W, H = rotated.extent
    out = rotated
    for _ in range(50):
        ratio = rng.uniform(0.1, 1.0)
        aspect = rng.uniform(0.5, 2.0)
        w = math.sqrt(ratio * W * H * aspect)
        h = math.sqrt(ratio * W * H / aspect)
        if w > W or h > H:
            continue
        x0 = rng.uniform(0.0, W - w)
        y0 = rng.uniform(0.0, H - h)
        try:
            out = crop_scene(rotated, (x0, y0, w, h))
            break
        except ValueError:
            continue
    if p_mask > 0.0 and out.gt_regions:
        masked = rng.random(len(out.gt_regions)) < p_mask
        out = SceneSample(
            out.image_id,
            out.extent,
            [replace(r, dont_care=bool(r.dont_care or m)) for r, m in zip(out.gt_regions, masked)],
        )
    return out


def _sgd_step(net, grads_w, grads_b, vel_w, vel_b, lr, cfg):
    for i in range(len(net.weights)):
        vel_w[i] = cfg.momentum * vel_w[i] + grads_w[i] + cfg.weight_decay * net.weights[i]
        vel_b[i] = cfg.momentum * vel_b[i] + grads_b[i]
        net.weights[i] -= lr * vel_w[i]
        net.biases[i] -= lr * vel_b[i]


def _backward(net, acts, dlogits):
    """Gradients of the summed loss given dL/dlogits at the output layer."""
    grads_w = [None] * len(net.weights)
    grads_b = [None] * len(net.biases)
    delta = dlogits
    for i in reversed(range(len(net.weights))):
        grads_w[i] = acts[i].T @ delta
        grads_b[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ net.weights[i].T) * (acts[i] > 0.0)
    return grads_w, grads_b


def batch_loss_and_grads(net, x, targets, betas, sample_weights=None):
    """Weighted-sum batch loss and parameter gradients (used by training
    and by the finite-difference checks)."""
    acts = net.forward_full(x)
    losses, dlogits = _batch_losses(acts[-1], np.atleast_2d(targets), betas)
    if sample_weights is None:
        sample_weights = np.ones(len(losses))
    total = float(np.dot(losses, sample_weights))
    grads_w, grads_b = _backward(net, acts, dlogits * sample_weights[:, None])
    return total, grads_w, grads_b, losses


def train(dataset, cfg: TrainConfig = TrainConfig(), scenes=None, extractor=None,
          hidden_dims=DEFAULT_HIDDEN):
    """Train a selector on LabelRecords with SGD/momentum/weight decay.

    When ``scenes`` (image_id -> SceneSample) and ``extractor`` are given,
    features are re-extracted each epoch from augmented scenes with the
    masking probability interpolated from p_mask_initial to p_mask_final;
    otherwise the stored feature vectors are used as-is.  Deterministic
    under cfg.seed.
    """
    if not dataset:
        raise ValueError("dataset is empty")
    X = np.array([r.features for r in dataset], dtype=float)
    Y = np.array([r.labels for r in dataset], dtype=float)
    dims = {len(r.features) for r in dataset} | {X.shape[1]}
    ks = {len(r.labels) for r in dataset}
    if len(dims) != 1 or len(ks) != 1:
        raise ValueError("inconsistent feature or label dimensions in dataset")
    d, k = X.shape[1], Y.shape[1]
    net = SelectorNet([d, *hidden_dims, k], seed=cfg.seed)
    vel_w = [np.zeros_like(w) for w in net.weights]
    vel_b = [np.zeros_like(b) for b in net.biases]
    rng = np.random.default_rng(cfg.seed + 1)
    rates = cfg.learning_rates()
    n_epochs = len(rates)
    log = []
    for epoch, lr in enumerate(rates):
        if scenes is not None and extractor is not None:
            frac = epoch / (n_epochs - 1) if n_epochs > 1 else 1.0
            p_mask = cfg.p_mask_initial + (cfg.p_mask_final - cfg.p_mask_initial) * frac
            X = np.array(
                [extractor.extract(augment(scenes[r.image_id], rng, p_mask)) for r in dataset]
            )
        perm = rng.permutation(len(dataset))
        epoch_losses = []
        for start in range(0, len(dataset), cfg.batch_size):
            idx = perm[start:start + cfg.batch_size]
            xb, yb = X[idx], Y[idx]
            betas = compute_beta(yb, cfg.beta_clamp)
            acts = net.forward_full(xb)
            losses, dlogits = _batch_losses(acts[-1], yb, betas)
            if not np.all(np.isfinite(losses)):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch + 1}, batch {start // cfg.batch_size + 1}"
                )
            keep = ohem_filter(losses, cfg.ohem_fraction)
            weights = np.zeros(len(losses))
            weights[keep] = 1.0 / len(keep)  # mean over retained samples
            grads_w, grads_b = _backward(net, acts, dlogits * weights[:, None])
            _sgd_step(net, grads_w, grads_b, vel_w, vel_b, lr, cfg)
            epoch_losses.append(float(losses[keep].mean()))
        log.append(
            {
                "epoch": epoch + 1,
                "lr": lr,
                "mean_loss": float(np.mean(epoch_losses)),
                "train_accuracy": _accuracy(net, X, Y),
            }
        )
    return net, log


def _accuracy(net, X, Y):
    probs = net.forward_full(X)[-1]
    picks = np.argmax(probs, axis=1)
    hits = Y[np.arange(len(Y)), picks] > 0
    return float(np.mean(hits))


def selector_accuracy(net: SelectorNet, dataset, skip_all_zero: bool = False) -> float:
    """Fraction of records whose selected index carries a positive label.

    All-zero-label records count as incorrect unless skipped.
    """
    if not dataset:
        raise ValueError("dataset is empty")
    records = [r for r in dataset if any(r.labels)] if skip_all_zero else list(dataset)
    if not records:
        return 0.0
    X = np.array([r.features for r in records], dtype=float)
    Y = np.array([r.labels for r in records], dtype=float)
    return _accuracy(net, X, Y)


def net_to_json(net: SelectorNet, extractor_id: str = "scene_stats_v1",
                cfg: TrainConfig | None = None) -> dict:
    doc = {
        "layer_dims": net.layer_dims,
        "weights": [w.tolist() for w in net.weights],
        "biases": [b.tolist() for b in net.biases],
        "feature_extractor": {"id": extractor_id, "dimension": net.input_dim},
    }
    if cfg is not None:
        doc["train_config"] = {k: getattr(cfg, k) for k in cfg.__dataclass_fields__}
        doc["seed"] = cfg.seed
    return doc


def net_from_json(doc: dict) -> SelectorNet:
    return SelectorNet(doc["layer_dims"], weights=doc["weights"], biases=doc["biases"])


def save_net(net: SelectorNet, path, extractor_id: str = "scene_stats_v1",
             cfg: TrainConfig | None = None):
    with open(path, "w") as f:
        json.dump(net_to_json(net, extractor_id, cfg), f)
        f.write("\n")


def load_net(path) -> SelectorNet:
    with open(path) as f:
        return net_from_json(json.load(f))
