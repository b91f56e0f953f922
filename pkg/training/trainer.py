"""
Joint training of the saliency detector, batch-norm bridge and RGBS
classifier under L = alpha * L_C + L_S, with staged variants that train
only the detector (L_S) or only the classifier fed ground-truth maps (L_C).
"""

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from engine.errors import ConfigError, ContractError, NonFiniteLossError
from engine.interpolate import resize_bilinear
from engine.seeding import rng_stream
from engine.tensor import Graph, Tensor, backward
from evaluation.classification import mean_class_accuracy
from fixations.dataset import DataConfig, eval_batch, training_batch
from networks.rgbs_classifier import extend_first_layer, parameter_groups
from networks.saliency_map import SaliencyMap
from training.checkpoint import load_checkpoint, save_checkpoint
from training.losses import multi_loss
from training.optimizer import lr_at, sgd_step
from training.state import TRACE_KEYS, TrainState

STAGES = ("saliency", "classifier", "joint")
LOG_COLUMNS = ("epoch", "iter", "lr", "loss_total", "loss_class", "loss_sal", "val_mca", "val_mse")
STAGNATION_TOLERANCE = 1e-6
SALIENCY_KERNEL = "classifier.stage0.conv0.weight_sal"


@dataclass
class TrainConfig:
    alpha: float = 0.2
    lr: float = 0.001
    lr_fresh: Optional[float] = None
    lr_pretrained: Optional[float] = None
    momentum: float = 0.9
    weight_decay: float = 0.0005
    batch_size: int = 16
    decay_constant: float = 1e-5
    patience_epochs: int = 10
    max_epochs: int = 50
    seed: int = 0
    stage: str = "joint"
    loss_resolution: str = "full"

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown train keys: {sorted(unknown)}")
        return cls(**data)

    def validate(self):
        if self.alpha < 0:
            raise ConfigError(f"alpha must be >= 0, got {self.alpha}")
        if self.patience_epochs < 1:
            raise ConfigError("patience_epochs must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.max_epochs < 1:
            raise ConfigError("max_epochs must be >= 1")
        if self.lr <= 0 or (self.lr_fresh is not None and self.lr_fresh <= 0) or (
            self.lr_pretrained is not None and self.lr_pretrained <= 0
        ):
            raise ConfigError("learning rates must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError("momentum must lie in [0, 1)")
        if self.weight_decay < 0 or self.decay_constant < 0:
            raise ConfigError("weight_decay and decay_constant must be >= 0")
        if self.stage not in STAGES:
            raise ConfigError(f"stage must be one of {STAGES}, got {self.stage!r}")
        if self.loss_resolution not in ("full", "coarse"):
            raise ConfigError("loss_resolution must be full or coarse")
        return self

    def group_lr(self, group):
        if group == "pretrained" and self.lr_pretrained is not None:
            return self.lr_pretrained
        if group == "fresh" and self.lr_fresh is not None:
            return self.lr_fresh
        return self.lr


@dataclass
class EpochResult:
    epoch: int
    iteration: int
    lr: float
    losses: Dict[str, float]
    val_mca: float
    val_mse: float

    def row(self):
        return {
            "epoch": self.epoch,
            "iter": self.iteration,
            "lr": self.lr,
            **self.losses,
            "val_mca": self.val_mca,
            "val_mse": self.val_mse,
        }


@dataclass
class TrainResult:
    state: TrainState
    history: List[EpochResult] = field(default_factory=list)
    best_state: Optional[dict] = None
    best_path: Optional[Path] = None
    last_path: Optional[Path] = None


def _check_disjoint(train_samples, val_samples):
    overlap = {s.image_id for s in train_samples} & {s.image_id for s in val_samples}
    if overlap:
        raise ContractError(f"validation shares {len(overlap)} images with training, e.g. {sorted(overlap)[0]}")


class MultiLossTrainer:
    """
    Sequential mini-batch SGD over a ``SalClassNet``.

    Batches follow a permutation seeded by ``seed + epoch``; each sample's
    augmentation draws from its own stream keyed by epoch and position, so
    a run resumed from an epoch checkpoint replays the same batches.
    """

    def __init__(self, model, config: TrainConfig, data_config: DataConfig = None, out_dir=None, journal=None, verbose=False, workers=1):
        self.model = model
        self.config = config.validate()
        self.data_config = (data_config or DataConfig()).validate()
        self.out_dir = Path(out_dir) if out_dir is not None else None
        self.journal = journal
        self.verbose = verbose
        self.workers = max(1, int(workers))
        if self.data_config.crop_size != model.saliency.config.input_size:
            raise ConfigError(
                f"crop size {self.data_config.crop_size} != network input size {model.saliency.config.input_size}"
            )
        self.trainable = self._trainable_parameters()
        self._no_decay = {name for name in self.trainable if not model.decays(name)}
        self._log(f"stage {config.stage}: {len(self.trainable)} trainable tensors")

    def _log(self, message, event="trainer", **data):
        if self.verbose:
            print(f"[TRAIN] {message}")
        if self.journal is not None:
            self.journal.log_event(event, {"message": message, **data}, source="MultiLossTrainer")

    def _trainable_parameters(self):
        stage = self.config.stage
        named = dict(self.model.named_parameters())
        if stage == "saliency":
            return {n: t for n, t in named.items() if n.startswith("saliency.")}
        if stage == "classifier":
            return {n: t for n, t in named.items() if not n.startswith("saliency.")}
        return named

    @property
    def heatmap_size(self):
        if self.config.loss_resolution == "coarse":
            return self.model.saliency.config.coarse_size
        return None

    @property
    def feeds_ground_truth(self):
        return self.config.stage == "classifier" and self.model.uses_saliency

    def learning_rates(self, iteration) -> Dict[str, float]:
        cfg = self.config
        return {
            name: lr_at(cfg.group_lr(self.model.parameter_group(name)), iteration, cfg.decay_constant)
            for name in self.trainable
        }

    def objective(self, terms):
        if self.config.stage == "saliency":
            return terms.saliency
        if self.config.stage == "classifier":
            return terms.classification
        return terms.total

    def _override(self, maps):
        if not self.feeds_ground_truth:
            return None
        size = self.model.saliency.config.input_size
        return Tensor(maps if maps.shape[-1] == size else resize_bilinear(maps, size, size))

    def compute_loss(self, images, maps, labels):
        """Forward one batch on the active graph; returns the loss terms."""
        out = self.model(Tensor(images), saliency_override=self._override(maps))
        predicted = out.coarse if self.config.loss_resolution == "coarse" else out.full
        return multi_loss(out.probs, predicted, labels, Tensor(maps), self.config.alpha)

    def _batches(self, samples, epoch):
        order = rng_stream(self.config.seed + epoch, "shuffle").permutation(len(samples))
        size = self.config.batch_size
        for start in range(0, len(order), size):
            positions = order[start : start + size]
            yield [samples[i] for i in positions], [
                rng_stream(self.config.seed, "augment", epoch, int(i)) for i in positions
            ]

    def _build(self, item):
        samples, rngs = item
        return training_batch(samples, rngs, self.data_config, self.heatmap_size)

    def _assembled(self, samples, epoch):
        """Augmented batches in shuffle order, prefetching one ahead when workers > 1."""
        if self.workers == 1:
            for item in self._batches(samples, epoch):
                yield self._build(item)
            return
        with ThreadPoolExecutor(max_workers=self.workers) as pool:
            pending = None
            for item in self._batches(samples, epoch):
                future = pool.submit(self._build, item)
                if pending is not None:
                    yield pending.result()
                pending = future
            if pending is not None:
                yield pending.result()

    def train_step(self, images, maps, labels, state: TrainState, batch_index=0):
        self.model.train()
        with Graph() as graph:
            terms = self.compute_loss(images, maps, labels)
        if not terms.is_finite():
            raise NonFiniteLossError(batch_index, state.iteration, terms.values())
        self.model.zero_grad()
        backward(graph, self.objective(terms))
        grads = {name: t.grad for name, t in self.trainable.items() if t.grad is not None}
        sgd_step(
            self.trainable,
            grads,
            state.optimizer,
            self.learning_rates(state.iteration),
            self.config.momentum,
            self.config.weight_decay,
            self._no_decay,
        )
        state.advance()
        return terms

    def train_epoch(self, samples, state: TrainState) -> Dict[str, float]:
        """One pass over ``samples``; returns the mean loss terms of the epoch."""
        if not samples:
            raise ContractError("training set is empty")
        totals = {key: 0.0 for key in TRACE_KEYS}
        batches = 0
        for batch_index, (images, maps, labels) in enumerate(self._assembled(samples, state.epoch)):
            terms = self.train_step(images, maps, labels, state, batch_index)
            for key, value in terms.values().items():
                totals[key] += value
            batches += 1
        return {key: value / batches for key, value in totals.items()}

    def validate(self, samples):
        """Centre-crop validation: (mean class accuracy, saliency MSE)."""
        if not samples:
            raise ContractError("validation set is empty")
        self.model.eval()
        predictions, labels, errors = [], [], []
        for start in range(0, len(samples), self.config.batch_size):
            images, maps, batch_labels = eval_batch(samples[start : start + self.config.batch_size], self.data_config, self.heatmap_size)
            out = self.model(Tensor(images), saliency_override=self._override(maps))
            predicted = out.coarse if self.config.loss_resolution == "coarse" else out.full
            errors.append(np.mean((predicted.data - maps) ** 2, axis=(1, 2, 3)))
            predictions.append(out.predictions())
            labels.append(batch_labels)
        self.model.train()
        mca = mean_class_accuracy(
            np.concatenate(predictions), np.concatenate(labels), self.model.classifier.config.n_classes
        )
        return mca, float(np.mean(np.concatenate(errors)))

    def _write_log_row(self, result: EpochResult):
        if self.out_dir is None:
            return
        path = self.out_dir / "train_log.csv"
        fresh = not path.exists()
        with open(path, "a", newline="", encoding="utf-8") as f:
            writer = csv.DictWriter(f, fieldnames=LOG_COLUMNS, lineterminator="\n")
            if fresh:
                writer.writeheader()
            row = result.row()
            writer.writerow({k: repr(float(v)) if isinstance(v, float) else v for k, v in row.items()})

    def resume(self, path) -> TrainState:
        state = load_checkpoint(path, self.model)
        self._log(f"resumed from {path} at epoch {state.epoch}, iteration {state.iteration}", event="resume")
        return state

    def init_from(self, path):
        """
        Copy matching weights from an earlier stage's checkpoint. Every
        parameter the file supplies joins the ``pretrained`` group. When a
        3-channel classifier seeds a 4-channel one, the saliency kernel slice
        is drawn as in ``extend_first_layer`` and stays ``fresh``.
        """
        state = load_checkpoint(path, self.model, strict=False)
        classifier = self.model.classifier
        if f"param/{SALIENCY_KERNEL}" in state.missing and classifier.weight_sal is not None:
            kernels = extend_first_layer(classifier.weight_rgb, rng_seed=self.config.seed)
            classifier.weight_sal.data[...] = kernels.data[:, 3:]
        for name, _ in self.model.named_parameters():
            self.model.set_parameter_group(name, "fresh" if f"param/{name}" in state.missing else "pretrained")
        groups = parameter_groups(self.model)
        self._log(
            f"initialized from {path}; {len(groups['pretrained'])} pretrained, {len(groups['fresh'])} fresh parameters",
            event="init",
            missing=state.missing,
            fresh=sorted(groups["fresh"]),
        )
        return state.missing

    def _selects(self, improved_mca, improved_mse):
        return improved_mse if self.config.stage == "saliency" else improved_mca

    def train(self, train_samples, val_samples, state: TrainState = None) -> TrainResult:
        """
        Train until ``max_epochs`` or until neither validation metric has
        improved for ``patience_epochs`` epochs. The model is left holding the
        selected weights: best validation MCA, or best MSE in the saliency stage.
        """
        _check_disjoint(train_samples, val_samples)
        cfg = self.config
        state = state or TrainState()
        result = TrainResult(state=state)
        best_path = self.out_dir / "best.scnc" if self.out_dir is not None else None
        last_path = self.out_dir / "last.scnc" if self.out_dir is not None else None
        if self.out_dir is not None:
            self.out_dir.mkdir(parents=True, exist_ok=True)

        while state.epoch < cfg.max_epochs and not state.stagnant(cfg.patience_epochs):
            losses = self.train_epoch(train_samples, state)
            state.epoch += 1
            for key in TRACE_KEYS:
                state.traces[key].append(losses[key])
            val_mca, val_mse = self.validate(val_samples)
            improved = state.observe(val_mca, val_mse, STAGNATION_TOLERANCE)
            epoch = EpochResult(state.epoch, state.iteration, lr_at(cfg.lr, state.iteration, cfg.decay_constant), losses, val_mca, val_mse)
            result.history.append(epoch)
            self._write_log_row(epoch)
            if self.journal is not None:
                self.journal.record_epoch(epoch.row())
            self._log(
                f"epoch {state.epoch} iter {state.iteration} loss {losses['loss_total']:.6f} "
                f"(class {losses['loss_class']:.6f}, sal {losses['loss_sal']:.6f}) "
                f"val mca {val_mca:.4f} mse {val_mse:.6f}",
                event="epoch",
            )
            if self._selects(*improved):
                state.best_epoch = state.epoch
                result.best_state = self.model.state_dict()
                if best_path is not None:
                    save_checkpoint(best_path, self.model, state)
            if last_path is not None:
                save_checkpoint(last_path, self.model, state)

        if result.best_state is None and best_path is not None and best_path.exists():
            load_checkpoint(best_path, self.model, strict=False)
        elif result.best_state is not None:
            self.model.load_state_dict(result.best_state)
        result.best_path = best_path
        result.last_path = last_path
        self._log(f"stopped after epoch {state.epoch}; selected epoch {state.best_epoch}", event="stop")
        return result


def evaluate_classification(model, samples, data_config: DataConfig = None, batch_size=16, ground_truth_maps=False) -> float:
    """Mean class accuracy on centre crops."""
    data_config = data_config or DataConfig()
    model.eval()
    predictions, labels = [], []
    for start in range(0, len(samples), batch_size):
        images, maps, batch_labels = eval_batch(samples[start : start + batch_size], data_config)
        override = Tensor(maps) if ground_truth_maps and model.uses_saliency else None
        predictions.append(model(Tensor(images), saliency_override=override).predictions())
        labels.append(batch_labels)
    model.train()
    return mean_class_accuracy(np.concatenate(predictions), np.concatenate(labels), model.classifier.config.n_classes)


def predict_maps(model, samples, batch_size=16) -> List[SaliencyMap]:
    """
    Full-image saliency predictions: each image is resized to the network
    input, and the upsampled map is resized back to the image's own size.
    """
    size = model.saliency.config.input_size
    maps = []
    model.eval()
    for start in range(0, len(samples), batch_size):
        chunk = samples[start : start + batch_size]
        images = np.stack([resize_bilinear(s.image, size, size) for s in chunk])
        _, full = model.saliency(Tensor(images))
        for sample, values in zip(chunk, full.data[:, 0]):
            height, width = sample.heatmap.shape
            maps.append(SaliencyMap(resize_bilinear(values, height, width)))
    model.train()
    return maps
