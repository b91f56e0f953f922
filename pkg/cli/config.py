"""
Run configuration: preset defaults from ``configs/presets.yaml``, an
optional flat config file (YAML or key=value lines), then command-line
flags, later layers winning.
"""

import copy
import os
import re
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import yaml
from dotenv import load_dotenv

from engine.errors import ConfigError
from evaluation.saliency_metrics import MetricConfig
from fixations.dataset import DataConfig
from fixations.imageio import MAP_FORMATS
from fixations.synth import IMAGE_FORMATS
from networks.rgbs_classifier import ClassifierConfig
from networks.saliency_net import SaliencyNetConfig
from training.trainer import TrainConfig

PRESETS_PATH = Path(__file__).resolve().parent.parent / "configs" / "presets.yaml"
SECTIONS = ("saliency_net", "classifier", "train", "data", "metrics")
THREADS_ENV = "SALCLASS_THREADS"

# flat key -> (section, field) targets inside the preset sections
SECTION_KEYS = {
    "alpha": [("train", "alpha")],
    "lr": [("train", "lr")],
    "lr_fresh": [("train", "lr_fresh")],
    "lr_pretrained": [("train", "lr_pretrained")],
    "momentum": [("train", "momentum")],
    "weight_decay": [("train", "weight_decay")],
    "batch_size": [("train", "batch_size")],
    "patience": [("train", "patience_epochs")],
    "max_epochs": [("train", "max_epochs")],
    "stage": [("train", "stage")],
    "input_channels": [("classifier", "input_channels")],
    "seed": [("train", "seed"), ("metrics", "seed")],
    "sigma_px": [("data", "sigma_px")],
    "sauc_splits": [("metrics", "sauc_splits")],
}
RUN_KEYS = (
    "manifest",
    "out",
    "seed",
    "preset",
    "resume",
    "init_from",
    "checkpoint",
    "split",
    "classes",
    "per_class",
    "size",
    "alphas",
    "image",
    "format",
    "image_format",
    "verbose",
)
FLAT_KEYS = frozenset(SECTION_KEYS) | frozenset(RUN_KEYS)


def load_presets(path=PRESETS_PATH):
    with open(path, "r", encoding="utf-8") as f:
        document = yaml.safe_load(f) or {}
    root = document.get("salclassnet_presets", {})
    return root.get("presets", {}), root.get("default", "desk")


def preset_sections(name, presets):
    """Sections of preset ``name`` with ``extends`` chains merged."""
    if name not in presets:
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(sorted(presets))}")
    preset = presets[name]
    base = preset_sections(preset["extends"], presets) if "extends" in preset else {s: {} for s in SECTIONS}
    merged = copy.deepcopy(base)
    for section in SECTIONS:
        merged.setdefault(section, {}).update(copy.deepcopy(preset.get(section) or {}))
    return merged


KEY_VALUE_LINE = re.compile(r"^\s*([A-Za-z_][\w-]*)\s*=(.*)$")


def _parse_key_values(lines, path):
    data = {}
    for number, line in enumerate(lines, start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        match = KEY_VALUE_LINE.match(line)
        if not match:
            raise ConfigError(f"{path}:{number}: expected key=value, got {stripped!r}")
        try:
            data[match.group(1)] = yaml.safe_load(match.group(2).strip()) if match.group(2).strip() else None
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}:{number}: invalid value: {exc}") from exc
    return data


def load_flat_file(path):
    """
    A user config file: one flat mapping of flag names (underscored) to
    values, written either as YAML (``alpha: 0.3``) or as ``key=value``
    lines. Values are parsed as YAML scalars in both forms.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    lines = text.splitlines()
    content = [line for line in lines if line.strip() and not line.strip().startswith("#")]
    if content and all(KEY_VALUE_LINE.match(line) for line in content):
        data = _parse_key_values(lines, path)
    else:
        try:
            data = yaml.safe_load(text) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: invalid YAML: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a flat mapping of keys to values")
    data = {str(k).replace("-", "_"): v for k, v in data.items()}
    unknown = set(data) - FLAT_KEYS
    if unknown:
        raise ConfigError(f"{path}: unknown keys {sorted(unknown)}")
    nested = [k for k, v in data.items() if isinstance(v, (dict, list))]
    if nested:
        raise ConfigError(f"{path}: values must be scalars, got nested values for {sorted(nested)}")
    return data


def worker_threads():
    load_dotenv()
    raw = os.environ.get(THREADS_ENV)
    if raw is None or raw.strip() == "":
        return 1
    try:
        threads = int(raw)
    except ValueError as exc:
        raise ConfigError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from exc
    if threads < 1:
        raise ConfigError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    return threads


@dataclass
class RunConfig:
    command: str
    preset: str = "desk"
    manifest: Optional[str] = None
    out: Optional[str] = None
    seed: int = 0
    resume: Optional[str] = None
    init_from: Optional[str] = None
    checkpoint: Optional[str] = None
    split: str = "test"
    classes: int = 4
    per_class: int = 32
    size: int = 64
    alphas: str = "0,0.2,1"
    image: Optional[str] = None
    format: str = "pgm"
    image_format: str = "png"
    verbose: bool = False
    threads: int = 1
    saliency_net: SaliencyNetConfig = field(default_factory=SaliencyNetConfig)
    classifier: ClassifierConfig = field(default_factory=ClassifierConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    data: DataConfig = field(default_factory=DataConfig)
    metrics: MetricConfig = field(default_factory=MetricConfig)

    def validate(self):
        self.saliency_net.validate()
        self.classifier.validate()
        self.train.validate()
        self.data.validate()
        self.metrics.validate()
        if self.saliency_net.input_size != self.classifier.input_size:
            raise ConfigError("saliency_net and classifier input sizes differ")
        if self.data.crop_size != self.saliency_net.input_size:
            raise ConfigError(f"crop size {self.data.crop_size} != network input size {self.saliency_net.input_size}")
        if self.format not in MAP_FORMATS:
            raise ConfigError(f"format must be one of {', '.join(MAP_FORMATS)}, got {self.format!r}")
        if self.image_format not in IMAGE_FORMATS:
            raise ConfigError(f"image_format must be one of {', '.join(IMAGE_FORMATS)}, got {self.image_format!r}")
        return self

    def flat(self):
        """Every resolved value as ``section.key -> value``, for printing and the journal."""
        values = {}
        for key, value in asdict(self).items():
            if isinstance(value, dict):
                for inner, v in value.items():
                    values[f"{key}.{inner}"] = v
            else:
                values[key] = value
        return values

    def print_resolved(self):
        for key, value in sorted(self.flat().items()):
            print(f"[CONFIG] {key} = {value}")


def resolve_config(command, flags=None, config_file=None, presets_path=PRESETS_PATH) -> RunConfig:
    """
    Merge preset < file < flags. ``flags`` holds only options given on the
    command line (None values are ignored).
    """
    flags = {k: v for k, v in (flags or {}).items() if v is not None}
    unknown = set(flags) - FLAT_KEYS
    if unknown:
        raise ConfigError(f"unknown options {sorted(unknown)}")
    file_values = load_flat_file(config_file) if config_file else {}
    layered = {**file_values, **flags}

    presets, default = load_presets(presets_path)
    preset = layered.get("preset", default)
    sections = preset_sections(preset, presets)
    for key, targets in SECTION_KEYS.items():
        if key in layered:
            for section, name in targets:
                sections[section][name] = layered[key]

    try:
        run = RunConfig(
            command=command,
            preset=preset,
            saliency_net=SaliencyNetConfig.from_dict(sections["saliency_net"]),
            classifier=ClassifierConfig.from_dict(sections["classifier"]),
            train=TrainConfig.from_dict(sections["train"]),
            data=DataConfig.from_dict(sections["data"]),
            metrics=MetricConfig.from_dict(sections["metrics"]),
            threads=worker_threads(),
        )
    except TypeError as exc:
        raise ConfigError(f"preset {preset!r}: {exc}") from exc
    for key in RUN_KEYS:
        if key in layered and key != "preset":
            setattr(run, key, layered[key])
    return run.validate()
