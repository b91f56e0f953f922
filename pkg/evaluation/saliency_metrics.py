"""
Saliency metrics: shuffled AUC, normalized scanpath saliency and Pearson
correlation, evaluated per image and averaged without weights.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from typing import List, Optional

import numpy as np

from engine.errors import ConfigError, ContractError, DegenerateStatisticsError, ShapeError
from engine.interpolate import resize_bilinear
from engine.seeding import rng_stream
from fixations.heatmap import FixationSet
from networks.saliency_map import SaliencyMap


@dataclass
class MetricConfig:
    sauc_splits: int = 100
    negatives_per_split: Optional[int] = None
    negative_pool: str = "other-images"
    seed: int = 0

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown metrics keys: {sorted(unknown)}")
        return cls(**data)

    def validate(self):
        if self.sauc_splits < 1:
            raise ConfigError("sauc_splits must be >= 1")
        if self.negatives_per_split is not None and self.negatives_per_split < 1:
            raise ConfigError("negatives_per_split must be >= 1")
        if self.negative_pool != "other-images":
            raise ConfigError(f"unsupported negative_pool {self.negative_pool!r}")
        return self


def _values(saliency, coords) -> np.ndarray:
    """
    Nearest-pixel lookup of (x, y) coordinates, rounding halves up. Points
    must satisfy 0 <= x < width and 0 <= y < height.
    """
    values = saliency.values if isinstance(saliency, SaliencyMap) else np.asarray(saliency, dtype=np.float64)
    coords = np.asarray(coords, dtype=np.float64).reshape(-1, 2)
    height, width = values.shape
    outside = (coords[:, 0] < 0) | (coords[:, 0] >= width) | (coords[:, 1] < 0) | (coords[:, 1] >= height)
    if outside.any():
        raise ContractError(f"{int(outside.sum())} fixations outside the {height}x{width} map")
    # the last half pixel [w - 0.5, w) belongs to column w - 1
    cols = np.minimum(np.floor(coords[:, 0] + 0.5).astype(np.int64), width - 1)
    rows = np.minimum(np.floor(coords[:, 1] + 0.5).astype(np.int64), height - 1)
    return values[rows, cols]


def _coords(points):
    return points.xy() if isinstance(points, FixationSet) else np.asarray(points, dtype=np.float64).reshape(-1, 2)


def pearson_cc(predicted: SaliencyMap, target: SaliencyMap) -> float:
    if predicted.shape != target.shape:
        raise ShapeError(f"cc shape mismatch: {predicted.shape} vs {target.shape}")
    a = predicted.values.ravel() - predicted.values.mean()
    b = target.values.ravel() - target.values.mean()
    saa = np.dot(a, a)
    sbb = np.dot(b, b)
    if saa == 0.0 or sbb == 0.0:
        raise DegenerateStatisticsError("correlation is undefined for a constant map")
    return float(np.clip(np.dot(a, b) / np.sqrt(saa * sbb), -1.0, 1.0))


def nss(predicted: SaliencyMap, fixations) -> float:
    """Mean of the z-scored map (population std) at the fixation pixels."""
    coords = _coords(fixations)
    if coords.shape[0] == 0:
        raise DegenerateStatisticsError("nss needs at least one fixation")
    values = predicted.values
    std = values.std()
    if std == 0.0:
        raise DegenerateStatisticsError("nss is undefined for a constant map")
    z = (values - values.mean()) / std
    return float(np.mean(_values(z, coords)))


def auc_from_scores(positives: np.ndarray, negatives: np.ndarray) -> float:
    """
    ROC area by an exact sweep over every distinct score, trapezoids
    between operating points; ties count half.
    """
    positives = np.asarray(positives, dtype=np.float64)
    negatives = np.asarray(negatives, dtype=np.float64)
    if positives.size == 0 or negatives.size == 0:
        raise ContractError("auc needs non-empty positive and negative sets")
    thresholds = np.unique(np.concatenate([positives, negatives]))[::-1]
    pos_sorted = np.sort(positives)
    neg_sorted = np.sort(negatives)
    tpr = (positives.size - np.searchsorted(pos_sorted, thresholds, side="left")) / positives.size
    fpr = (negatives.size - np.searchsorted(neg_sorted, thresholds, side="left")) / negatives.size
    tpr = np.concatenate([[0.0], tpr])
    fpr = np.concatenate([[0.0], fpr])
    return float(np.sum((fpr[1:] - fpr[:-1]) * (tpr[1:] + tpr[:-1]) / 2.0))


def shuffled_auc(predicted: SaliencyMap, positives, negatives, n_splits=100, rng_seed=0, negatives_per_split=None) -> float:
    """
    AUC of the map's values at an image's fixations against fixations
    borrowed from other images, averaged over ``n_splits`` seeded draws of
    ``negatives_per_split`` (default: as many as there are positives).
    """
    pos_coords = _coords(positives)
    pool = _coords(negatives)
    if pos_coords.shape[0] == 0 or pool.shape[0] == 0:
        raise ContractError("shuffled_auc needs non-empty positive and negative sets")
    if n_splits < 1:
        raise ContractError("n_splits must be >= 1")
    pos_values = _values(predicted, pos_coords)
    pool_values = _values(predicted, pool)
    size = pos_coords.shape[0] if negatives_per_split is None else int(negatives_per_split)
    replace = pool_values.size < size
    rng = rng_stream(rng_seed, "metric-splits")
    scores = [
        auc_from_scores(pos_values, pool_values[rng.choice(pool_values.size, size=size, replace=replace)])
        for _ in range(n_splits)
    ]
    return float(np.mean(scores))


@dataclass
class ImageScore:
    image_id: str
    s_auc: Optional[float]
    nss: Optional[float]
    cc: Optional[float]
    skipped: List[str] = field(default_factory=list)


@dataclass
class MetricReport:
    s_auc: float
    nss: float
    cc: float
    per_image: List[ImageScore]
    skipped: dict

    def summary(self):
        return {
            "images": len(self.per_image),
            "s_auc": self.s_auc,
            "nss": self.nss,
            "cc": self.cc,
            "skipped": dict(self.skipped),
            "aggregation": "unweighted mean over scored images",
        }


def _mean(values):
    values = [v for v in values if v is not None]
    return float(np.mean(values)) if values else float("nan")


def _score_image(index, prediction, samples, config):
    sample = samples[index]
    height, width = sample.heatmap.shape
    if prediction.shape != (height, width):
        prediction = SaliencyMap(resize_bilinear(prediction.values, height, width))

    positives = sample.fixations.in_bounds(height, width).xy()
    others = []
    for j, other in enumerate(samples):
        if j == index:
            continue
        oh, ow = other.heatmap.shape
        others.append(other.fixations.in_bounds(oh, ow).scaled(width / ow, height / oh).xy())
    pool = np.concatenate(others) if others else np.zeros((0, 2))

    score = ImageScore(sample.image_id, None, None, None)
    if positives.shape[0] == 0:
        score.skipped.append("no-fixations")
        return score
    if pool.shape[0] == 0:
        score.skipped.append("no-negatives")
    else:
        score.s_auc = shuffled_auc(
            prediction, positives, pool, config.sauc_splits, _split_seed(config.seed, index), config.negatives_per_split
        )
    try:
        score.nss = nss(prediction, positives)
    except DegenerateStatisticsError:
        score.skipped.append("nss-degenerate")
    try:
        score.cc = pearson_cc(prediction, sample.heatmap)
    except DegenerateStatisticsError:
        score.skipped.append("cc-degenerate")
    return score


def _split_seed(seed, index):
    """Per-image split seed derived from the metric seed."""
    return int(rng_stream(seed, "metric-splits", index).integers(0, 2**31 - 1))


def evaluate_maps(predictions: List[SaliencyMap], samples, config: MetricConfig = None, workers=1) -> MetricReport:
    """Score each prediction against its sample; images are independent, aggregation is in index order."""
    config = (config or MetricConfig()).validate()
    if len(predictions) != len(samples):
        raise ContractError(f"{len(predictions)} predictions for {len(samples)} samples")
    indices = range(len(samples))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            scores = list(pool.map(lambda i: _score_image(i, predictions[i], samples, config), indices))
    else:
        scores = [_score_image(i, predictions[i], samples, config) for i in indices]

    skipped = {}
    for s in scores:
        for reason in s.skipped:
            skipped[reason] = skipped.get(reason, 0) + 1
    return MetricReport(
        s_auc=_mean(s.s_auc for s in scores),
        nss=_mean(s.nss for s in scores),
        cc=_mean(s.cc for s in scores),
        per_image=scores,
        skipped=skipped,
    )


def human_baseline(samples, config: MetricConfig = None, workers=1) -> MetricReport:
    """Ground-truth heatmaps scored as if they were predictions."""
    return evaluate_maps([s.heatmap for s in samples], samples, config, workers)
