from evaluation.classification import mean_class_accuracy, sample_accuracy
from evaluation.report import write_metric_csv, write_metric_json, write_report
from evaluation.saliency_metrics import (
    ImageScore,
    MetricConfig,
    MetricReport,
    auc_from_scores,
    evaluate_maps,
    human_baseline,
    nss,
    pearson_cc,
    shuffled_auc,
)

__all__ = [
    "ImageScore",
    "MetricConfig",
    "MetricReport",
    "auc_from_scores",
    "evaluate_maps",
    "human_baseline",
    "mean_class_accuracy",
    "nss",
    "pearson_cc",
    "sample_accuracy",
    "shuffled_auc",
    "write_metric_csv",
    "write_metric_json",
    "write_report",
]
