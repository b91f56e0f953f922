from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields
from typing import List, Optional

import numpy as np

from engine.errors import ConfigError, ContractError
from engine.interpolate import resize_bilinear
from fixations.augment import augment, center_crop
from fixations.heatmap import FixationSet, fixations_to_heatmap, read_fixations
from fixations.imageio import load_image
from fixations.manifest import Manifest
from networks.saliency_map import SaliencyMap


@dataclass
class DataConfig:
    rescale_target: int = 72
    crop_size: int = 64
    sigma_px: Optional[float] = None
    weighting: str = "uniform"

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown data keys: {sorted(unknown)}")
        return cls(**data)

    def validate(self):
        if self.crop_size < 1 or self.rescale_target < self.crop_size:
            raise ConfigError("rescale_target must be >= crop_size >= 1")
        if self.sigma_px is not None and self.sigma_px <= 0:
            raise ConfigError("sigma_px must be positive")
        if self.weighting not in ("uniform", "duration"):
            raise ConfigError("weighting must be uniform or duration")
        return self


@dataclass
class Sample:
    image_id: str
    image: np.ndarray
    label: int
    fixations: FixationSet
    heatmap: SaliencyMap
    rejected_fixations: int = 0

    def __post_init__(self):
        if self.heatmap.shape != self.image.shape[1:]:
            raise ContractError(f"{self.image_id}: heatmap {self.heatmap.shape} vs image {self.image.shape}")


def load_sample(manifest: Manifest, entry, config: DataConfig) -> Sample:
    image = load_image(manifest.root / entry.relative_path)
    height, width = image.shape[1:]
    fixations, rejected = read_fixations(manifest.root / entry.fixation_file, width=width, height=height)
    heatmap = fixations_to_heatmap(fixations, height, width, config.sigma_px, config.weighting)
    return Sample(entry.image_id, image, entry.class_index, fixations, heatmap, rejected)


def load_samples(manifest: Manifest, split: str, config: DataConfig, workers: int = 1) -> List[Sample]:
    """Decode and render every sample of ``split``; order follows the manifest."""
    entries = manifest.entries(split)
    if workers <= 1:
        return [load_sample(manifest, e, config) for e in entries]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda e: load_sample(manifest, e, config), entries))


def _batch(views, labels, heatmap_size=None):
    images = np.stack([v.image for v in views])
    maps = np.stack([v.heatmap for v in views])[:, None]
    if heatmap_size is not None and heatmap_size != maps.shape[-1]:
        maps = resize_bilinear(maps, heatmap_size, heatmap_size)
    return images, maps, np.asarray(labels, dtype=np.int64)


def training_batch(samples: List[Sample], rngs, config: DataConfig, heatmap_size=None):
    """
    One augmented view per sample: ``rngs[i]`` draws the five crops and
    picks one of the ten crop/flip variants.
    """
    views = []
    for sample, rng in zip(samples, rngs):
        crops = augment(sample.image, sample.heatmap.values, rng, config.rescale_target, config.crop_size)
        views.append(crops[int(rng.integers(0, len(crops)))])
    return _batch(views, [s.label for s in samples], heatmap_size)


def eval_batch(samples: List[Sample], config: DataConfig, heatmap_size=None):
    views = [center_crop(s.image, s.heatmap.values, config.rescale_target, config.crop_size) for s in samples]
    return _batch(views, [s.label for s in samples], heatmap_size)
