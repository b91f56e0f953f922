import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, List, Tuple

import numpy as np

from engine.errors import ContractError, ManifestError
from networks.saliency_map import SaliencyMap

TRUNCATE_SIGMAS = 3.0
SIGMA_FRACTION = 0.035


@dataclass(frozen=True)
class Fixation:
    x: float
    y: float
    duration_ms: float = 0.0


@dataclass
class FixationSet:
    """Gaze points in image pixel coordinates (x = column, y = row)."""

    points: List[Fixation] = field(default_factory=list)

    def __len__(self):
        return len(self.points)

    def __iter__(self):
        return iter(self.points)

    def xy(self) -> np.ndarray:
        return np.array([[p.x, p.y] for p in self.points], dtype=np.float64).reshape(-1, 2)

    def durations(self) -> np.ndarray:
        return np.array([p.duration_ms for p in self.points], dtype=np.float64)

    def in_bounds(self, height, width) -> "FixationSet":
        return FixationSet([p for p in self.points if 0 <= p.x < width and 0 <= p.y < height])

    def scaled(self, sx, sy) -> "FixationSet":
        return FixationSet([Fixation(p.x * sx, p.y * sy, p.duration_ms) for p in self.points])

    @classmethod
    def from_xy(cls, coords: Iterable[Tuple[float, float]]):
        return cls([Fixation(float(x), float(y)) for x, y in coords])


def default_sigma(height, width) -> float:
    """Roughly one visual degree: 0.035 x the image short side."""
    return SIGMA_FRACTION * min(height, width)


def fixations_to_heatmap(fixations: FixationSet, height, width, sigma_px=None, weighting="uniform") -> SaliencyMap:
    """
    Sum of isotropic Gaussians centred on the fixations, each truncated at
    a radius of 3 sigma, min-max normalized to [0, 1].
    """
    inside = fixations.in_bounds(height, width)
    if len(inside) == 0:
        raise ContractError("heatmap rendering needs at least one in-bounds fixation")
    if weighting not in ("uniform", "duration"):
        raise ContractError(f"weighting must be 'uniform' or 'duration', got {weighting!r}")
    sigma = default_sigma(height, width) if sigma_px is None else float(sigma_px)
    if sigma <= 0:
        raise ContractError(f"sigma_px must be positive, got {sigma}")

    weights = np.ones(len(inside))
    if weighting == "duration":
        durations = inside.durations()
        if durations.sum() > 0:
            weights = durations

    rows = np.arange(height, dtype=np.float64)[:, None]
    cols = np.arange(width, dtype=np.float64)[None, :]
    radius2 = (TRUNCATE_SIGMAS * sigma) ** 2
    heat = np.zeros((height, width))
    for (x, y), weight in zip(inside.xy(), weights):
        d2 = (cols - x) ** 2 + (rows - y) ** 2
        heat += weight * np.where(d2 <= radius2, np.exp(-d2 / (2.0 * sigma * sigma)), 0.0)

    span = heat.max() - heat.min()
    if span == 0.0:
        return SaliencyMap(np.zeros_like(heat))
    return SaliencyMap((heat - heat.min()) / span)


def read_fixations(path, width=None, height=None):
    """
    Parse a ``x,y,duration_ms`` CSV (header required). When the image size
    is given, out-of-bounds rows are dropped. Returns ``(FixationSet, rejected)``.
    """
    path = Path(path)
    points = []
    rejected = 0
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:2]] != ["x", "y"]:
            raise ManifestError("fixation file must start with header x,y,duration_ms", path, 1)
        for line_number, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                x, y = float(row[0]), float(row[1])
                duration = float(row[2]) if len(row) > 2 and row[2] != "" else 0.0
            except (ValueError, IndexError) as exc:
                raise ManifestError(f"bad fixation row {row!r}", path, line_number) from exc
            if duration < 0:
                raise ManifestError(f"negative duration {duration}", path, line_number)
            if width is not None and height is not None and not (0 <= x < width and 0 <= y < height):
                rejected += 1
                continue
            points.append(Fixation(x, y, duration))
    return FixationSet(points), rejected


def write_fixations(path, fixations: FixationSet):
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["x", "y", "duration_ms"])
        for p in fixations:
            writer.writerow([repr(float(p.x)), repr(float(p.y)), repr(float(p.duration_ms))])
