from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from engine.errors import ContractError, ShapeError
from engine.interpolate import resize_bilinear

N_CROPS = 5


@dataclass
class Crop:
    image: np.ndarray
    heatmap: np.ndarray
    top: int
    left: int
    flipped: bool


def rescaled_shape(height, width, rescale_target) -> Tuple[int, int]:
    """Short side becomes ``rescale_target``; aspect ratio is kept."""
    if height <= width:
        return rescale_target, max(rescale_target, int(round(width * rescale_target / height)))
    return max(rescale_target, int(round(height * rescale_target / width))), rescale_target


def rescale_pair(image: np.ndarray, heatmap: np.ndarray, rescale_target: int):
    if image.ndim != 3 or heatmap.shape != image.shape[1:]:
        raise ShapeError(f"image {image.shape} and heatmap {heatmap.shape} disagree")
    out_h, out_w = rescaled_shape(image.shape[1], image.shape[2], rescale_target)
    if (out_h, out_w) == image.shape[1:]:
        return image.copy(), heatmap.copy()
    return resize_bilinear(image, out_h, out_w), resize_bilinear(heatmap, out_h, out_w)


def _crop(image, heatmap, top, left, size, flipped):
    img = image[:, top : top + size, left : left + size]
    hm = heatmap[top : top + size, left : left + size]
    if flipped:
        img, hm = img[:, :, ::-1], hm[:, ::-1]
    return Crop(np.ascontiguousarray(img), np.ascontiguousarray(hm), top, left, flipped)


def augment(image: np.ndarray, heatmap: np.ndarray, rng: np.random.Generator, rescale_target: int, crop_size: int) -> List[Crop]:
    """
    Five random ``crop_size`` crops of the rescaled pair plus the horizontal
    flip of each (10 crops, flips interleaved after their source crop).
    Image and heatmap always share the same geometry.
    """
    image, heatmap = rescale_pair(np.asarray(image, dtype=np.float64), np.asarray(heatmap, dtype=np.float64), rescale_target)
    height, width = heatmap.shape
    if height < crop_size or width < crop_size:
        raise ContractError(f"rescaled image {height}x{width} is smaller than crop {crop_size}")
    crops = []
    for _ in range(N_CROPS):
        top = int(rng.integers(0, height - crop_size + 1))
        left = int(rng.integers(0, width - crop_size + 1))
        crops.append(_crop(image, heatmap, top, left, crop_size, False))
        crops.append(_crop(image, heatmap, top, left, crop_size, True))
    return crops


def center_crop(image: np.ndarray, heatmap: np.ndarray, rescale_target: int, crop_size: int) -> Crop:
    """The single evaluation view: centre crop of the rescaled pair."""
    image, heatmap = rescale_pair(np.asarray(image, dtype=np.float64), np.asarray(heatmap, dtype=np.float64), rescale_target)
    height, width = heatmap.shape
    if height < crop_size or width < crop_size:
        raise ContractError(f"rescaled image {height}x{width} is smaller than crop {crop_size}")
    return _crop(image, heatmap, (height - crop_size) // 2, (width - crop_size) // 2, crop_size, False)


def flip(array: np.ndarray) -> np.ndarray:
    """Horizontal flip of the last axis."""
    return np.ascontiguousarray(np.asarray(array)[..., ::-1])
