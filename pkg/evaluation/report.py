import csv
import json
import math


def _cell(value):
    return "" if value is None else repr(float(value))


def write_metric_csv(path, report):
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["image_id", "s_auc", "nss", "cc"])
        for score in report.per_image:
            writer.writerow([score.image_id, _cell(score.s_auc), _cell(score.nss), _cell(score.cc)])


def _jsonable(value):
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    return value


def write_metric_json(path, report, extra=None):
    summary = report.summary()
    if extra:
        summary.update(extra)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(_jsonable(summary), f, indent=4, sort_keys=True)
        f.write("\n")


def write_report(out_dir, report, stem="metrics", extra=None):
    """``<stem>.csv`` per image plus ``<stem>.json`` summary; returns both paths."""
    csv_path = out_dir / f"{stem}.csv"
    json_path = out_dir / f"{stem}.json"
    write_metric_csv(csv_path, report)
    write_metric_json(json_path, report, extra)
    return csv_path, json_path
