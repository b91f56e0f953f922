"""
Synthetic top-down saliency dataset.

Each image holds three patches on a low-contrast tinted background:
the discriminative patch (class-specific stripe orientation inside a dark
frame), a decoy with another class's stripes and no frame, and a
high-contrast blob that is salient bottom-up but carries no class
information. Fixations scatter around the discriminative patch only.
Colours are drawn per sample and carry no class information.
"""

from pathlib import Path

import numpy as np
from scipy import ndimage

from engine.errors import ContractError
from engine.seeding import rng_stream
from fixations.heatmap import Fixation, FixationSet, write_fixations
from fixations.imageio import save_image, save_image_planes
from fixations.manifest import DEFAULT_PROPORTIONS, SPLITS, Manifest, ManifestEntry, save_manifest

MEAN_FIXATIONS = 6
MIN_IMAGE_SIZE = 16
IMAGE_FORMATS = ("png", "ppm", "pgm")


def _stripes(size, angle, period):
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    phase = (xx * np.cos(angle) + yy * np.sin(angle)) * 2.0 * np.pi / period
    return 0.5 + 0.5 * np.sin(phase)


def _place(rng, image_size, patch):
    """
    Three non-overlapping ``(top, left)`` corners: the image is split into
    2x2 cells, three cells are drawn without replacement and each patch is
    jittered inside its cell.
    """
    cell = image_size // 2
    if patch > cell:
        raise ContractError(f"patch of {patch}px does not fit a {cell}px cell")
    corners = []
    for index in rng.permutation(4)[:3]:
        row, col = divmod(int(index), 2)
        top = row * cell + int(rng.integers(0, cell - patch + 1))
        left = col * cell + int(rng.integers(0, cell - patch + 1))
        corners.append((top, left))
    return corners


def _tint(rng):
    return rng.uniform(0.6, 1.0, size=3)[:, None, None]


def render_sample(rng, class_index, n_classes, image_size):
    """Returns ``(image [3,S,S], fixations)`` for one synthetic sample."""
    patch = max(6, image_size // 4)
    period = max(3.0, patch / 3.0)
    noise = ndimage.gaussian_filter(rng.normal(0.0, 1.0, (image_size, image_size)), 2.0)
    base = 0.45 + 0.05 * noise / (np.abs(noise).max() + 1e-12)
    image = base[None] * _tint(rng)

    (top, left), (d_top, d_left), (b_top, b_left) = _place(rng, image_size, patch)
    stripes = _stripes(patch, np.pi * class_index / n_classes, period)
    image[:, top : top + patch, left : left + patch] = (0.35 + 0.3 * stripes)[None] * _tint(rng)
    image[:, top : top + patch, left] = 0.1
    image[:, top : top + patch, left + patch - 1] = 0.1
    image[:, top, left : left + patch] = 0.1
    image[:, top + patch - 1, left : left + patch] = 0.1

    decoy_class = (class_index + 1 + int(rng.integers(0, n_classes - 1))) % n_classes
    decoy = 0.35 + 0.3 * _stripes(patch, np.pi * decoy_class / n_classes, period)
    image[:, d_top : d_top + patch, d_left : d_left + patch] = decoy[None] * _tint(rng)

    yy, xx = np.mgrid[0:patch, 0:patch]
    centre = (patch - 1) / 2.0
    disk = (yy - centre) ** 2 + (xx - centre) ** 2 <= (patch / 2.0) ** 2
    region = image[:, b_top : b_top + patch, b_left : b_left + patch]
    region[:, disk] = _tint(rng)[:, :, 0]
    region[:, ~disk] = 0.0

    count = max(1, int(rng.poisson(MEAN_FIXATIONS)))
    cy, cx = top + centre, left + centre
    points = []
    for _ in range(count):
        x = float(np.clip(cx + rng.normal(0.0, patch / 4.0), 0.0, image_size - 1.0))
        y = float(np.clip(cy + rng.normal(0.0, patch / 4.0), 0.0, image_size - 1.0))
        points.append(Fixation(round(x, 3), round(y, 3), round(float(rng.uniform(150.0, 400.0)), 1)))
    return np.clip(image, 0.0, 1.0), FixationSet(points)


def split_counts(n_per_class, proportions=DEFAULT_PROPORTIONS):
    """Per-class ``(train, val, test)`` counts; val and test get at least one sample each."""
    if n_per_class < 3:
        raise ContractError(f"need at least 3 samples per class for train/val/test, got {n_per_class}")
    val = max(1, int(round(proportions[1] * n_per_class)))
    test = max(1, int(round(proportions[2] * n_per_class)))
    return n_per_class - val - test, val, test


def synth_dataset(out_dir, n_classes=4, n_per_class=32, image_size=64, seed=0, image_format="png", verbose=False) -> Manifest:
    """Write images, fixation CSVs and ``manifest.tsv`` under ``out_dir``."""
    if n_classes < 2:
        raise ContractError(f"need at least 2 classes, got {n_classes}")
    if image_size < MIN_IMAGE_SIZE:
        raise ContractError(f"image_size must be >= {MIN_IMAGE_SIZE}, got {image_size}")
    if image_format not in IMAGE_FORMATS:
        raise ContractError(f"image_format must be one of {', '.join(IMAGE_FORMATS)}, got {image_format!r}")
    counts = split_counts(n_per_class)

    out_dir = Path(out_dir)
    (out_dir / "images").mkdir(parents=True, exist_ok=True)
    (out_dir / "fixations").mkdir(parents=True, exist_ok=True)
    manifest = Manifest(root=out_dir, classes=[f"class_{k:02d}" for k in range(n_classes)], splits={s: [] for s in SPLITS})

    for class_index in range(n_classes):
        rng = rng_stream(seed, "synth", class_index)
        order = rng.permutation(n_per_class)
        for position, sample_index in enumerate(order):
            image_id = f"c{class_index:02d}_{sample_index:04d}"
            image, fixations = render_sample(rng, class_index, n_classes, image_size)
            rel_image = f"images/{image_id}.{image_format}"
            rel_fix = f"fixations/{image_id}.csv"
            if image_format == "pgm":
                save_image_planes(out_dir / rel_image, image)
            else:
                save_image(out_dir / rel_image, image)
            write_fixations(out_dir / rel_fix, fixations)
            split = SPLITS[0] if position < counts[0] else SPLITS[1] if position < counts[0] + counts[1] else SPLITS[2]
            manifest.splits[split].append(ManifestEntry(image_id, rel_image, class_index, rel_fix))
        if verbose:
            print(f"[SYNTH] class {class_index}: {n_per_class} samples")

    for split in SPLITS:
        manifest.splits[split].sort(key=lambda e: e.image_id)
    save_manifest(manifest, out_dir / "manifest.tsv")
    return manifest.validate()
