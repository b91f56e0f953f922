"""
Ground-truth pipeline: fixation files, Gaussian heatmaps, the de-blur
schedule, crop/flip augmentation, manifests and the synthetic dataset.
"""

from fixations.augment import Crop, augment, center_crop, flip
from fixations.blur import apply_gaussian_blur, blur_schedule
from fixations.dataset import DataConfig, Sample, eval_batch, load_samples, training_batch
from fixations.heatmap import Fixation, FixationSet, fixations_to_heatmap, read_fixations, write_fixations
from fixations.manifest import Manifest, ManifestEntry, load_manifest, save_manifest
from fixations.synth import synth_dataset

__all__ = [
    "Crop",
    "DataConfig",
    "Fixation",
    "FixationSet",
    "Manifest",
    "ManifestEntry",
    "Sample",
    "apply_gaussian_blur",
    "augment",
    "blur_schedule",
    "center_crop",
    "eval_batch",
    "fixations_to_heatmap",
    "flip",
    "load_manifest",
    "load_samples",
    "read_fixations",
    "save_manifest",
    "synth_dataset",
    "training_batch",
    "write_fixations",
]
