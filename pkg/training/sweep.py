import csv
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, List, Sequence

from engine.errors import ContractError
from training.trainer import MultiLossTrainer, TrainConfig

SWEEP_COLUMNS = ("alpha", "val_mca", "val_mse")


@dataclass
class SweepPoint:
    alpha: float
    val_mca: float
    val_mse: float


def parse_alphas(text) -> List[float]:
    """``"0,0.2,1"`` -> [0.0, 0.2, 1.0]"""
    try:
        alphas = [float(part) for part in str(text).split(",") if part.strip()]
    except ValueError as exc:
        raise ContractError(f"alphas must be comma-separated numbers, got {text!r}") from exc
    if not alphas or any(a < 0 for a in alphas):
        raise ContractError(f"alphas must be a non-empty list of values >= 0, got {text!r}")
    return alphas


def sweep_alpha(alphas: Sequence[float], build_model: Callable, train_samples, val_samples, config: TrainConfig, data_config=None, out_dir=None, journal=None, verbose=False, workers=1) -> List[SweepPoint]:
    """
    Train one joint model per alpha from the same initialization seed and
    report the selected epoch's validation accuracy and saliency MSE.
    """
    points = []
    out_dir = Path(out_dir) if out_dir is not None else None
    for alpha in alphas:
        run_config = replace(config, alpha=float(alpha), stage="joint")
        run_dir = out_dir / f"alpha_{alpha:g}" if out_dir is not None else None
        trainer = MultiLossTrainer(build_model(), run_config, data_config, run_dir, journal, verbose, workers)
        result = trainer.train(train_samples, val_samples)
        selected = next(e for e in result.history if e.epoch == result.state.best_epoch)
        points.append(SweepPoint(float(alpha), selected.val_mca, selected.val_mse))
        if verbose:
            print(f"[SWEEP] alpha {alpha:g}: val mca {selected.val_mca:.4f}, val mse {selected.val_mse:.6f}")
    if out_dir is not None:
        write_sweep_csv(out_dir / "alpha_sweep.csv", points)
    return points


def write_sweep_csv(path, points):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(SWEEP_COLUMNS)
        for p in points:
            writer.writerow([repr(p.alpha), repr(p.val_mca), repr(p.val_mse)])
