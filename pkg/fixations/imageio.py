"""Image and map files: PNG/PGM/PPM ingest (PGM also as per-channel planes), 8-bit PGM and 16-bit PNG map export."""

from pathlib import Path

import numpy as np
from PIL import Image

from engine.errors import ShapeError
from networks.saliency_map import SaliencyMap, normalize_map

MAP_FORMATS = ("pgm", "png")
PLANES = ("r", "g", "b")


def plane_paths(path):
    """``x.pgm`` -> ``[x.r.pgm, x.g.pgm, x.b.pgm]``, the per-channel files of a planar image."""
    path = Path(path)
    return [path.with_suffix(f".{channel}.pgm") for channel in PLANES]


def load_image(path) -> np.ndarray:
    """
    Read a PNG, PGM or PPM file as a float64 [3,H,W] array in [0,1]. A
    ``.pgm`` path that only exists as per-channel planes is read from them.
    """
    path = Path(path)
    planes = plane_paths(path)
    if path.suffix.lower() == ".pgm" and not path.exists() and all(p.exists() for p in planes):
        stacked = []
        for plane in planes:
            with Image.open(plane) as img:
                stacked.append(np.asarray(img.convert("L"), dtype=np.float64) / 255.0)
        return np.ascontiguousarray(np.stack(stacked))
    with Image.open(path) as img:
        if img.mode in ("I;16", "I;16B", "I"):
            array = np.asarray(img, dtype=np.float64) / 65535.0
            array = np.repeat(array[None], 3, axis=0)
        else:
            array = np.asarray(img.convert("RGB"), dtype=np.float64) / 255.0
            array = array.transpose(2, 0, 1)
    return np.ascontiguousarray(array)


def _pixels(image):
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 3 or image.shape[0] != 3:
        raise ShapeError(f"expected [3,H,W] image, got {image.shape}")
    return np.rint(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)


def save_image(path, image: np.ndarray):
    """Write a [3,H,W] array in [0,1] as 8-bit grayscale for ``.pgm``, 8-bit RGB otherwise (PNG, PPM)."""
    path = Path(path)
    pixels = np.ascontiguousarray(_pixels(image).transpose(1, 2, 0))
    if path.suffix.lower() == ".pgm":
        Image.fromarray(pixels).convert("L").save(path)
    else:
        Image.fromarray(pixels).save(path)


def save_image_planes(path, image: np.ndarray):
    """Write each channel of a [3,H,W] image as its own 8-bit P5 file next to ``path``."""
    pixels = _pixels(image)
    for plane, channel in zip(plane_paths(path), pixels):
        Image.fromarray(np.ascontiguousarray(channel)).save(plane)


def export_map(path, saliency: SaliencyMap):
    """
    Normalize and write a map. ``.pgm`` gives 8-bit binary PGM (P5),
    anything else 16-bit grayscale PNG.
    """
    path = Path(path)
    values = normalize_map(saliency).values
    if path.suffix.lower() == ".pgm":
        Image.fromarray(np.rint(values * 255.0).astype(np.uint8)).save(path)
    else:
        Image.fromarray(np.rint(values * 65535.0).astype(np.uint16)).save(path)


def load_map(path) -> SaliencyMap:
    """Read an exported map back to [0,1] floats."""
    with Image.open(path) as img:
        array = np.asarray(img)
    scale = 65535.0 if array.dtype == np.uint16 or array.max(initial=0) > 255 else 255.0
    if array.ndim == 3:
        array = array[..., 0]
    return SaliencyMap(array.astype(np.float64) / scale)
