#!/usr/bin/env python3
"""
SalClassNet Desk Experiment

Runs the desk-scale comparison on the synthetic dataset for several seeds:
  - saliency quality: joint training (alpha 0.2) vs the detector trained on L_S only
  - classification: the 4-channel model fed learned maps vs a 3-channel classifier
    trained with the same alpha-weighted objective,
    plus the 4-channel classifier fed ground-truth maps
Writes ``desk_experiment.json`` with per-seed numbers and the majority verdicts.
"""

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from cli.config import resolve_config
from evaluation.saliency_metrics import evaluate_maps
from fixations.dataset import load_samples
from fixations.synth import synth_dataset
from journal.run_journal import RunJournal
from networks.salclassnet import SalClassNet
from training.trainer import MultiLossTrainer, evaluate_classification, predict_maps

SAUC_MARGIN = 0.02
MCA_MARGIN = 0.03


def _train(run, n_classes, splits, stage, alpha=None, input_channels=4, out=None, journal=None):
    classifier = replace(run.classifier, n_classes=n_classes, input_channels=input_channels)
    model = SalClassNet(run.saliency_net, classifier, rng_seed=run.train.seed)
    config = replace(run.train, stage=stage, alpha=run.train.alpha if alpha is None else alpha)
    trainer = MultiLossTrainer(model, config, run.data, out, journal, run.verbose, run.threads)
    trainer.train(splits["train"], splits["val"])
    return model


def run_seed(run, seed, root):
    """All four trainings for one seed; returns the test numbers."""
    run = replace(run, train=replace(run.train, seed=seed), metrics=replace(run.metrics, seed=seed))
    data_dir = root / f"seed_{seed}" / "data"
    manifest = synth_dataset(data_dir, run.classes, run.per_class, run.size, seed)
    splits = {s: load_samples(manifest, s, run.data, run.threads) for s in ("train", "val", "test")}
    journal = RunJournal(root / f"seed_{seed}" / "journal.json")
    journal.store_config(run.flat())
    test = splits["test"]
    n = manifest.n_classes

    joint = _train(run, n, splits, "joint", journal=journal)
    saliency_only = _train(run, n, splits, "saliency", journal=journal)
    # same alpha-scaled objective and schedule as the joint model; L_S only reaches the detector
    rgb = _train(run, n, splits, "joint", input_channels=3, journal=journal)
    gt_fed = _train(run, n, splits, "classifier", journal=journal)

    result = {
        "seed": seed,
        "joint_s_auc": evaluate_maps(predict_maps(joint, test), test, run.metrics).s_auc,
        "saliency_only_s_auc": evaluate_maps(predict_maps(saliency_only, test), test, run.metrics).s_auc,
        "joint_mca": evaluate_classification(joint, test, run.data),
        "rgb_mca": evaluate_classification(rgb, test, run.data),
        "ground_truth_fed_mca": evaluate_classification(gt_fed, test, run.data, ground_truth_maps=True),
    }
    result["saliency_shift_holds"] = result["joint_s_auc"] - result["saliency_only_s_auc"] > SAUC_MARGIN
    result["rgbs_gain_holds"] = result["joint_mca"] - result["rgb_mca"] >= MCA_MARGIN
    journal.log_event("desk_result", result, source="desk_experiment")
    return result


def main():
    """Main entry point"""
    parser = argparse.ArgumentParser(description="desk-scale SalClassNet comparison")
    parser.add_argument("--out", default="desk_experiment")
    parser.add_argument("--seeds", default="0,1,2")
    parser.add_argument("--config")
    parser.add_argument("--preset", default="desk")
    parser.add_argument("--max-epochs", type=int)
    parser.add_argument("--verbose", action="store_true", default=None)
    args = parser.parse_args()

    run = resolve_config(
        "desk-experiment",
        {"preset": args.preset, "max_epochs": args.max_epochs, "verbose": args.verbose},
        args.config,
    )
    root = Path(args.out)
    root.mkdir(parents=True, exist_ok=True)
    seeds = [int(s) for s in args.seeds.split(",") if s.strip()]

    print("=" * 60)
    print("SALCLASSNET DESK EXPERIMENT")
    print("=" * 60)
    results = []
    for seed in seeds:
        result = run_seed(run, seed, root)
        results.append(result)
        print(
            f"[DESK] seed {seed}: s-AUC joint {result['joint_s_auc']:.4f} vs L_S only "
            f"{result['saliency_only_s_auc']:.4f}; MCA RGBS {result['joint_mca']:.4f} vs RGB "
            f"{result['rgb_mca']:.4f} (ground-truth fed {result['ground_truth_fed_mca']:.4f})"
        )

    majority = len(results) // 2 + 1
    summary = {
        "seeds": seeds,
        "results": results,
        "saliency_shift_majority": sum(r["saliency_shift_holds"] for r in results) >= majority,
        "rgbs_gain_majority": sum(r["rgbs_gain_holds"] for r in results) >= majority,
    }
    with open(root / "desk_experiment.json", "w", encoding="utf-8") as f:
        json.dump(summary, f, indent=4, default=float)
    print(f"[DESK] saliency shift: {summary['saliency_shift_majority']}, RGBS gain: {summary['rgbs_gain_majority']}")
    return 0 if summary["saliency_shift_majority"] and summary["rgbs_gain_majority"] else 2


if __name__ == "__main__":
    sys.exit(main())
