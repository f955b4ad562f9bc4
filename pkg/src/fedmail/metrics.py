"""Confusion-matrix metrics and deterministic file emission (CSV, JSON
summary, static SVG convergence plots).

Phishing is the positive class everywhere. Metrics whose denominator is
zero (e.g. precision on an all-legitimate test set) are reported as an
undefined marker (None in memory, empty cell in CSV) rather than 0, 1 or
NaN. All emitted files are pure functions of the record: re-emitting the
same record produces byte-identical output.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:  # pragma: no cover
    from .engine import FLRunRecord

METRIC_NAMES = ("accuracy", "fpr", "fnr", "precision", "recall", "f1")

CSV_HEADER = ("epoch", "scope", "client_id", "metric", "value")

_PALETTE = (
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
)
_AVG_COLOR = "#000000"


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


def confusion(predictions, labels) -> ConfusionMatrix:
    """Counts with phishing (1) as the positive class."""
    preds = np.asarray(predictions)
    labs = np.asarray(labels)
    if preds.shape != labs.shape:
        raise ValueError("predictions and labels differ in length")
    if preds.size == 0:
        raise ValueError("cannot score an empty set")
    pos = labs == 1
    pred_pos = preds == 1
    return ConfusionMatrix(
        tp=int(np.sum(pred_pos & pos)),
        fp=int(np.sum(pred_pos & ~pos)),
        tn=int(np.sum(~pred_pos & ~pos)),
        fn=int(np.sum(~pred_pos & pos)),
    )


def _ratio(num: int, den: int) -> float | None:
    return num / den if den else None


def derive_metrics(cm: ConfusionMatrix) -> dict[str, float | None]:
    if cm.total == 0:
        raise ValueError("empty confusion matrix")
    precision = _ratio(cm.tp, cm.tp + cm.fp)
    recall = _ratio(cm.tp, cm.tp + cm.fn)
    if precision is None or recall is None or precision + recall == 0:
        f1 = None
    else:
        f1 = 2 * precision * recall / (precision + recall)
    return {
        "accuracy": (cm.tp + cm.tn) / cm.total,
        "fpr": _ratio(cm.fp, cm.fp + cm.tn),
        "fnr": _ratio(cm.fn, cm.fn + cm.tp),
        "precision": precision,
        "recall": recall,
        "f1": f1,
    }


def _fmt(value: float | int | None) -> str:
    if value is None:
        return ""
    if isinstance(value, int):
        return str(value)
    return format(value, ".9g")


def record_rows(record: "FLRunRecord") -> list[tuple]:
    """Flat (epoch, scope, client_id, metric, value) rows in stable order:
    epoch, then scope alphabetically, then client id, then metric name."""
    rows = []
    for er in record.epochs:
        for k in sorted(er.bytes_down):
            rows.append((er.epoch, "channel", k, "bytes_down", er.bytes_down[k]))
            rows.append((er.epoch, "channel", k, "bytes_up", er.bytes_up[k]))
        for k in sorted(er.global_):
            for name in sorted(METRIC_NAMES):
                rows.append((er.epoch, "global", k, name, er.global_[k][name]))
        for name in sorted(METRIC_NAMES):
            rows.append((er.epoch, "global_avg", "", name, er.global_avg[name]))
        for k in sorted(er.local):
            for name in sorted(METRIC_NAMES):
                rows.append((er.epoch, "local", k, name, er.local[k][name]))
        for name in sorted(METRIC_NAMES):
            rows.append((er.epoch, "local_avg", "", name, er.local_avg[name]))
    return rows


def emit_csv(record: "FLRunRecord", path: str | Path) -> None:
    """RFC-4180 CSV of the whole record; floats at 9 significant digits,
    undefined metrics as empty cells."""
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\r\n")
            writer.writerow(CSV_HEADER)
            for epoch, scope, client, metric, value in record_rows(record):
                writer.writerow((epoch, scope, client, metric, _fmt(value)))
    except OSError as exc:
        raise OSError(f"cannot write metrics CSV to {path}: {exc}") from exc


def load_metrics_csv(path: str | Path) -> list[dict]:
    """Inverse of emit_csv for round-trip checks; empty cells become None."""
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            rows.append(
                {
                    "epoch": int(row["epoch"]),
                    "scope": row["scope"],
                    "client_id": int(row["client_id"]) if row["client_id"] else None,
                    "metric": row["metric"],
                    "value": float(row["value"]) if row["value"] else None,
                }
            )
    return rows


def emit_ledger_csv(record: "FLRunRecord", path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\r\n")
        writer.writerow(("epoch", "client_id", "bytes_up", "bytes_down"))
        for er in record.epochs:
            for k in sorted(er.bytes_down):
                writer.writerow((er.epoch, k, er.bytes_up[k], er.bytes_down[k]))


def emit_json_summary(record: "FLRunRecord", path: str | Path) -> None:
    """Final-epoch metric table plus the communication ledger totals."""
    final = record.final()
    per_client = {}
    for k in sorted(final.global_):
        per_client[str(k)] = {
            "global": final.global_[k],
            "local": final.local.get(k),
        }
    totals_up = {str(k): sum(er.bytes_up[k] for er in record.epochs) for k in final.bytes_up}
    totals_down = {str(k): sum(er.bytes_down[k] for er in record.epochs) for k in final.bytes_down}
    summary = {
        "final_epoch": final.epoch,
        "per_client": per_client,
        "averages": {"global": final.global_avg, "local": final.local_avg},
        "ledger": {
            "model_bytes": record.model_bytes,
            "bytes_per_active_client_per_epoch": 2 * record.model_bytes,
            "bytes_up_total": totals_up,
            "bytes_down_total": totals_down,
        },
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")


def valid_plot_metrics() -> tuple[str, ...]:
    return tuple(
        f"{scope}_{name}" for scope in ("local", "global") for name in METRIC_NAMES
    )


def _series_points(record: "FLRunRecord", scope: str, name: str) -> dict[str, list[float | None]]:
    """Per-series metric values per epoch; None where absent/undefined."""
    client_ids = sorted(record.epochs[0].global_) if record.epochs else []
    series: dict[str, list[float | None]] = {str(k): [] for k in client_ids}
    series["avg"] = []
    for er in record.epochs:
        for k in client_ids:
            table = er.global_ if scope == "global" else er.local
            value = table.get(k, {}).get(name) if k in table else None
            series[str(k)].append(value)
        avg = er.global_avg if scope == "global" else er.local_avg
        series["avg"].append(avg[name])
    return series


def emit_plot(record: "FLRunRecord", metric: str, path: str | Path) -> None:
    """Static SVG line chart: one series per client plus the unweighted
    average, x = global epoch, y = metric value. No timestamps; equal
    records give byte-identical files."""
    if metric not in valid_plot_metrics():
        raise ValueError(
            f"unknown metric {metric!r}; valid: {', '.join(valid_plot_metrics())}"
        )
    scope, name = metric.split("_", 1)
    series = _series_points(record, scope, name)
    n_epochs = len(record.epochs)
    width, height = 640, 400
    left, right, top, bottom = 60, 150, 40, 50
    plot_w, plot_h = width - left - right, height - top - bottom

    def sx(epoch: float) -> float:
        span = max(n_epochs - 1, 1)
        return left + plot_w * (epoch / span)

    def sy(value: float) -> float:
        return top + plot_h * (1.0 - value)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{left}" y="24" font-family="sans-serif" font-size="15">{metric} per global epoch</text>',
    ]
    for i in range(5):
        y = top + plot_h * i / 4
        value = 1.0 - i / 4
        parts.append(
            f'<line x1="{left}" y1="{y:.2f}" x2="{left + plot_w}" y2="{y:.2f}" stroke="#dddddd" stroke-width="1"/>'
        )
        parts.append(
            f'<text x="{left - 8}" y="{y + 4:.2f}" text-anchor="end" font-family="sans-serif" font-size="11">{value:.2f}</text>'
        )
    step = max(1, (n_epochs - 1) // 9) if n_epochs > 1 else 1
    for epoch in range(0, n_epochs, step):
        x = sx(epoch)
        parts.append(
            f'<text x="{x:.2f}" y="{top + plot_h + 18}" text-anchor="middle" font-family="sans-serif" font-size="11">{epoch}</text>'
        )
    parts.append(
        f'<rect x="{left}" y="{top}" width="{plot_w}" height="{plot_h}" fill="none" stroke="#333333"/>'
    )

    for s_idx, (label, values) in enumerate(series.items()):
        color = _AVG_COLOR if label == "avg" else _PALETTE[s_idx % len(_PALETTE)]
        segment: list[str] = []
        lone_points: list[tuple[float, float]] = []
        segments: list[list[str]] = []
        for epoch, value in enumerate(values):
            if value is None:
                if len(segment) == 1:
                    lone_points.append((sx(epoch - 1), sy(values[epoch - 1])))
                if len(segment) > 1:
                    segments.append(segment)
                segment = []
            else:
                segment.append(f"{sx(epoch):.2f},{sy(value):.2f}")
        if len(segment) == 1:
            lone_points.append((sx(len(values) - 1), sy(values[-1])))
        elif segment:
            segments.append(segment)
        for seg in segments:
            parts.append(
                f'<polyline points="{" ".join(seg)}" fill="none" stroke="{color}" stroke-width="1.5"/>'
            )
        for px, py in lone_points:
            parts.append(f'<circle cx="{px:.2f}" cy="{py:.2f}" r="3" fill="{color}"/>')
        legend_y = top + 16 * s_idx
        legend_x = left + plot_w + 12
        name_txt = "average" if label == "avg" else f"client {label}"
        parts.append(
            f'<line x1="{legend_x}" y1="{legend_y + 6}" x2="{legend_x + 18}" y2="{legend_y + 6}" stroke="{color}" stroke-width="2"/>'
        )
        parts.append(
            f'<text x="{legend_x + 24}" y="{legend_y + 10}" font-family="sans-serif" font-size="11">{name_txt}</text>'
        )
    parts.append("</svg>")
    try:
        Path(path).write_text("\n".join(parts) + "\n", encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write plot to {path}: {exc}") from exc
