"""Text tables, CSV and matplotlib figures for evaluation and stream reports."""

from __future__ import annotations

import csv
import io
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .evaluate import EvalReport, LuxBucket  # noqa: E402

DETECTION_COLUMNS = ("map", "mean_iou", "precision", "recall", "tp", "fp", "fn")
MASK_COLUMNS = ("mask_precision", "mask_accuracy", "mask_recall")


def _fmt(v) -> str:
    if v is None:
        return "-"
    if isinstance(v, float):
        return f"{100.0 * v:.2f}"
    return str(v)


def _row_name(key: str) -> str:
    return LuxBucket[key].label if key in LuxBucket.__members__ else key


def _columns(report: EvalReport) -> tuple[str, ...]:
    return DETECTION_COLUMNS + (MASK_COLUMNS if report.mask_accuracy is not None else ())


def summary_table(report: EvalReport) -> str:
    """Aligned-column summary; ratios are printed as percentages.

    With lux buckets the rows follow the four-bucket layout (one per lux
    range) followed by the overall row.
    """
    cols = _columns(report)
    rows = [(_row_name(k), sub) for k, sub in report.buckets.items()] + [("overall", report)]
    header = ["subset"] + list(cols)
    body = [[name] + [_fmt(getattr(r, c)) for c in cols] for name, r in rows]
    widths = [max(len(str(x)) for x in col) for col in zip(header, *body)]
    lines = ["  ".join(h.ljust(w) if i == 0 else h.rjust(w) for i, (h, w) in enumerate(zip(header, widths)))]
    lines.append("  ".join("-" * w for w in widths))
    for row in body:
        lines.append("  ".join(x.ljust(w) if i == 0 else x.rjust(w) for i, (x, w) in enumerate(zip(row, widths))))
    if report.undefined:
        lines.append(f"undefined (0/0, reported as 0): {', '.join(report.undefined)}")
    return "\n".join(lines) + "\n"


def report_csv(report: EvalReport) -> str:
    cols = _columns(report)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["subset"] + list(cols))
    for key, sub in list(report.buckets.items()) + [("overall", report)]:
        writer.writerow([key] + [getattr(sub, c) for c in cols])
    return buf.getvalue()


def plot_pr_curve(precision: Sequence[float], recall: Sequence[float], path, title: str = "Face detection") -> Path:
    fig, ax = plt.subplots(figsize=(5, 4))
    if recall:
        r = np.concatenate([[0.0], recall])
        p = np.concatenate([[precision[0]], precision])
        ax.step(r, p, where="post", color="k", lw=1.5, label="raw")
        env = np.maximum.accumulate(np.asarray(precision)[::-1])[::-1]
        ax.step(r, np.concatenate([[env[0]], env]), where="post", color="tab:red", lw=1.0, ls="--",
                label="interpolated")
        ax.legend(loc="lower left", frameon=False)
    ax.set_xlim(0, 1.02)
    ax.set_ylim(0, 1.05)
    ax.set_xlabel("recall")
    ax.set_ylabel("precision")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def plot_lux_buckets(report: EvalReport, path) -> Path:
    keys = [b.name for b in LuxBucket if b.name in report.buckets]
    metrics = [("map", "MAP"), ("mean_iou", "meanIOU")]
    if report.mask_accuracy is not None:
        metrics.append(("mask_accuracy", "mask acc."))
    x = np.arange(len(keys))
    width = 0.8 / len(metrics)
    fig, ax = plt.subplots(figsize=(6, 4))
    for i, (attr, label) in enumerate(metrics):
        vals = [100.0 * getattr(report.buckets[k], attr) for k in keys]
        ax.bar(x + (i - (len(metrics) - 1) / 2) * width, vals, width, label=label)
    ax.set_xticks(x)
    ax.set_xticklabels([LuxBucket[k].label for k in keys])
    ax.set_ylim(0, 105)
    ax.set_ylabel("%")
    ax.legend(frameon=False, ncol=len(metrics), loc="lower center")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def plot_latency(latencies_ms: Sequence[float], path, target_fps: float = 9.0) -> Path:
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(np.arange(len(latencies_ms)), latencies_ms, lw=0.8, color="k")
    ax.axhline(1000.0 / target_fps, color="tab:red", ls="--", lw=1, label=f"{target_fps:g} Hz frame period")
    ax.set_xlabel("frame")
    ax.set_ylabel("latency (ms)")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def plot_normalization(naive: np.ndarray, constrained: np.ndarray, path) -> Path:
    fig, axes = plt.subplots(1, 2, figsize=(8, 3.2))
    for ax, img, title in zip(axes, (naive, constrained), ("full-range min-max", "temperature constrained")):
        ax.imshow(img, cmap="gray", vmin=0, vmax=1)
        ax.set_title(title)
        ax.axis("off")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)
