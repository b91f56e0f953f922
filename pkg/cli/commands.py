"""
``salclass`` command line: dataset synthesis, ground-truth heatmaps,
training, evaluation, map export, the human baseline, the alpha sweep and
the de-blur schedule.

Exit codes: 0 success, 1 usage / configuration / IO failure, 2 numerical
failure (non-finite loss, degenerate statistics).
"""

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from cli.config import resolve_config
from engine.errors import (
    CheckpointError,
    ConfigError,
    ContractError,
    DegenerateStatisticsError,
    ManifestError,
    NonFiniteLossError,
    SalClassError,
)
from evaluation.report import write_report
from evaluation.saliency_metrics import evaluate_maps, human_baseline
from fixations.blur import blur_schedule, blur_sequence
from fixations.dataset import load_samples
from fixations.heatmap import fixations_to_heatmap, read_fixations
from fixations.imageio import MAP_FORMATS, export_map, load_image, save_image
from fixations.manifest import load_manifest
from fixations.synth import IMAGE_FORMATS, synth_dataset
from journal.run_journal import RunJournal
from networks.salclassnet import SalClassNet
from training.checkpoint import load_checkpoint
from training.sweep import parse_alphas, sweep_alpha
from training.trainer import MultiLossTrainer, evaluate_classification, predict_maps

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NUMERIC = 2


def build_parser():
    parser = argparse.ArgumentParser(prog="salclass", description="Top-down saliency with joint classification")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="flat YAML file of option values")
        p.add_argument("--preset", help="desk | paper-shapes | full")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int)
        p.add_argument("--verbose", action="store_true", default=None)
        return p

    def data(p):
        p.add_argument("--manifest")
        p.add_argument("--sigma-px", type=float)
        return p

    def training(p):
        p.add_argument("--alpha", type=float)
        p.add_argument("--lr", type=float)
        p.add_argument("--lr-fresh", type=float)
        p.add_argument("--lr-pretrained", type=float)
        p.add_argument("--momentum", type=float)
        p.add_argument("--weight-decay", type=float)
        p.add_argument("--batch-size", type=int)
        p.add_argument("--patience", type=int)
        p.add_argument("--max-epochs", type=int)
        p.add_argument("--stage", choices=("saliency", "classifier", "joint"))
        p.add_argument("--input-channels", type=int, choices=(3, 4), help="3 for the RGB-only baseline")
        return p

    p = common(sub.add_parser("synth", help="write the synthetic dataset"))
    p.add_argument("--classes", type=int)
    p.add_argument("--per-class", type=int)
    p.add_argument("--size", type=int)
    p.add_argument("--image-format", choices=IMAGE_FORMATS)

    p = data(common(sub.add_parser("heatmaps", help="render ground-truth heatmaps for a manifest")))
    p.add_argument("--format", choices=MAP_FORMATS, help="8-bit pgm or 16-bit png")

    p = training(data(common(sub.add_parser("train", help="train SalClassNet"))))
    p.add_argument("--resume", help="continue from a last.scnc checkpoint")
    p.add_argument("--init-from", help="copy matching weights from an earlier stage")

    for name, text in (("eval", "score predicted maps and classification"), ("export-maps", "write predicted maps")):
        p = data(common(sub.add_parser(name, help=text)))
        p.add_argument("--checkpoint", help="trained model checkpoint")
        p.add_argument("--split", choices=("train", "val", "test"))
        p.add_argument("--sauc-splits", type=int)
        if name == "export-maps":
            p.add_argument("--format", choices=MAP_FORMATS, help="8-bit pgm or 16-bit png")

    p = data(common(sub.add_parser("human-baseline", help="score ground-truth maps as predictions")))
    p.add_argument("--split", choices=("train", "val", "test"))
    p.add_argument("--sauc-splits", type=int)

    p = training(data(common(sub.add_parser("sweep-alpha", help="train one model per alpha"))))
    p.add_argument("--alphas", help="comma-separated, e.g. 0,0.2,1")

    p = common(sub.add_parser("blur-schedule", help="print the de-blur schedule"))
    p.add_argument("--image", help="also write the blurred sequence of this image")
    return parser


def _flags(args):
    values = vars(args).copy()
    values.pop("command")
    values.pop("config", None)
    return values


def _out_dir(run):
    if not run.out:
        raise ConfigError(f"{run.command} needs --out")
    out = Path(run.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _manifest(run):
    if not run.manifest:
        raise ConfigError(f"{run.command} needs --manifest")
    return load_manifest(run.manifest)


def build_model(run, n_classes):
    classifier = replace(run.classifier, n_classes=n_classes)
    return SalClassNet(run.saliency_net, classifier, rng_seed=run.train.seed)


def _trained_model(run, manifest):
    if not run.checkpoint:
        raise CheckpointError(f"{run.command} needs --checkpoint")
    model = build_model(run, manifest.n_classes)
    load_checkpoint(run.checkpoint, model)
    return model


def _report_ingest(journal=None, **splits):
    """Print (and journal) how many out-of-bounds fixation rows each split dropped."""
    rejected = {name: sum(s.rejected_fixations for s in samples) for name, samples in splits.items()}
    print("[INGEST] out-of-bounds fixations dropped: " + ", ".join(f"{k} {v}" for k, v in rejected.items()))
    if journal is not None:
        journal.log_event(
            "ingest",
            {"samples": {k: len(v) for k, v in splits.items()}, "rejected_fixations": rejected},
            source="cli",
        )
    return rejected


def cmd_synth(run):
    out = _out_dir(run)
    manifest = synth_dataset(out, run.classes, run.per_class, run.size, run.seed, run.image_format, verbose=run.verbose)
    print(f"[SYNTH] {len(manifest.all_entries())} samples, {manifest.n_classes} classes -> {out / 'manifest.tsv'}")
    return EXIT_OK


def cmd_heatmaps(run):
    manifest = _manifest(run)
    out = _out_dir(run)
    rejected = 0
    for entry in manifest.all_entries():
        image = load_image(manifest.root / entry.relative_path)
        height, width = image.shape[1:]
        fixations, dropped = read_fixations(manifest.root / entry.fixation_file, width=width, height=height)
        rejected += dropped
        heatmap = fixations_to_heatmap(fixations, height, width, run.data.sigma_px, run.data.weighting)
        export_map(out / f"{entry.image_id}_gt.{run.format}", heatmap)
    print(f"[EXPORT] {len(manifest.all_entries())} heatmaps -> {out} ({rejected} out-of-bounds fixations dropped)")
    return EXIT_OK


def cmd_train(run):
    manifest = _manifest(run)
    out = _out_dir(run)
    journal = RunJournal(out / "journal.json")
    journal.store_config(run.flat())
    train_samples = load_samples(manifest, "train", run.data, run.threads)
    val_samples = load_samples(manifest, "val", run.data, run.threads)
    _report_ingest(journal, train=train_samples, val=val_samples)

    model = build_model(run, manifest.n_classes)
    trainer = MultiLossTrainer(model, run.train, run.data, out, journal, run.verbose, run.threads)
    state = None
    if run.init_from:
        trainer.init_from(run.init_from)
    if run.resume:
        state = trainer.resume(run.resume)
    result = trainer.train(train_samples, val_samples, state)

    selected = next((e for e in result.history if e.epoch == result.state.best_epoch), None)
    if selected is None:
        print(f"[TRAIN] no new epochs; best epoch {result.state.best_epoch} in {result.best_path}")
        return EXIT_OK
    print(f"[TRAIN] best epoch {selected.epoch}: val MCA {selected.val_mca:.4f}, val MSE {selected.val_mse:.6f}")
    print(f"[TRAIN] checkpoint {result.best_path}, log {out / 'train_log.csv'}")
    return EXIT_OK


def cmd_eval(run):
    manifest = _manifest(run)
    out = _out_dir(run)
    model = _trained_model(run, manifest)
    samples = load_samples(manifest, run.split, run.data, run.threads)
    report = evaluate_maps(predict_maps(model, samples), samples, run.metrics, run.threads)
    mca = evaluate_classification(model, samples, run.data, run.train.batch_size)
    rejected = _report_ingest(**{run.split: samples})[run.split]
    extra = {"split": run.split, "mca": mca, "rejected_fixations": rejected}
    csv_path, json_path = write_report(out, report, stem=f"{run.split}_metrics", extra=extra)
    print(f"[EVAL] {run.split}: s-AUC {report.s_auc:.4f}  NSS {report.nss:.4f}  CC {report.cc:.4f}  MCA {mca:.4f}")
    if report.skipped:
        print(f"[EVAL] skipped: {report.skipped}")
    print(f"[EVAL] {csv_path}, {json_path}")
    return EXIT_OK


def cmd_export_maps(run):
    manifest = _manifest(run)
    out = _out_dir(run)
    model = _trained_model(run, manifest)
    samples = load_samples(manifest, run.split, run.data, run.threads)
    for sample, prediction in zip(samples, predict_maps(model, samples)):
        export_map(out / f"{sample.image_id}_pred.{run.format}", prediction)
        export_map(out / f"{sample.image_id}_gt.{run.format}", sample.heatmap)
    print(f"[EXPORT] {len(samples)} predicted and ground-truth maps -> {out}")
    return EXIT_OK


def cmd_human_baseline(run):
    manifest = _manifest(run)
    out = _out_dir(run)
    samples = load_samples(manifest, run.split, run.data, run.threads)
    report = human_baseline(samples, run.metrics, run.threads)
    write_report(out, report, stem=f"{run.split}_human_baseline", extra={"split": run.split})
    print(f"[EVAL] human baseline {run.split}: s-AUC {report.s_auc:.4f}  NSS {report.nss:.4f}  CC {report.cc:.4f}")
    return EXIT_OK


def cmd_sweep_alpha(run):
    manifest = _manifest(run)
    out = _out_dir(run)
    journal = RunJournal(out / "journal.json")
    journal.store_config(run.flat())
    train_samples = load_samples(manifest, "train", run.data, run.threads)
    val_samples = load_samples(manifest, "val", run.data, run.threads)
    _report_ingest(journal, train=train_samples, val=val_samples)
    points = sweep_alpha(
        parse_alphas(run.alphas),
        lambda: build_model(run, manifest.n_classes),
        train_samples,
        val_samples,
        run.train,
        run.data,
        out,
        journal,
        run.verbose,
        run.threads,
    )
    for p in points:
        print(f"[SWEEP] alpha {p.alpha:g}: val MCA {p.val_mca:.4f}, val MSE {p.val_mse:.6f}")
    print(f"[SWEEP] {out / 'alpha_sweep.csv'}")
    return EXIT_OK


def cmd_blur_schedule(run):
    schedule = blur_schedule()
    for t, variance in schedule:
        print(f"{t:.1f}s\tvariance {variance:g}")
    if run.image:
        out = _out_dir(run)
        image = load_image(run.image)
        for step, (t, variance, blurred) in enumerate(blur_sequence(image, schedule)):
            save_image(out / f"blur_{step:02d}.png", blurred)
        print(f"[EXPORT] {len(schedule)} blurred frames -> {out}")
    return EXIT_OK


HANDLERS = {
    "synth": cmd_synth,
    "heatmaps": cmd_heatmaps,
    "train": cmd_train,
    "eval": cmd_eval,
    "export-maps": cmd_export_maps,
    "human-baseline": cmd_human_baseline,
    "sweep-alpha": cmd_sweep_alpha,
    "blur-schedule": cmd_blur_schedule,
}


def run_command(argv=None):
    """Parse ``argv``, run one command and return its exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        run = resolve_config(args.command, _flags(args), args.config)
        if run.verbose or args.command in ("train", "sweep-alpha"):
            run.print_resolved()
        return HANDLERS[args.command](run)
    except (NonFiniteLossError, DegenerateStatisticsError) as exc:
        print(f"[ERROR] {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, ManifestError, CheckpointError, ContractError, OSError) as exc:
        print(f"[ERROR] {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SalClassError as exc:
        print(f"[ERROR] {exc}", file=sys.stderr)
        return EXIT_USAGE
