"""Rendered artifacts for a training or evaluation run.

Everything here is presentation: CSV tables for machine consumption
next to PNG figures for humans. The delimited files and the figures
are written side by side in one report directory so a run's outputs
travel together.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .training import Metrics


def write_metrics_csv(metrics: Metrics, path: str | Path) -> Path:
    """One row per class: class, iou, dsc."""
    path = Path(path)
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["class", "iou", "dsc"])
        for class_id, (iou, dsc) in enumerate(
            zip(metrics.per_class_iou, metrics.per_class_dsc)
        ):
            writer.writerow([class_id, f"{iou:.6f}", f"{dsc:.6f}"])
    return path


def write_confusion_csv(metrics: Metrics, path: str | Path) -> Path:
    """Confusion matrix with a true\\pred header row and column."""
    path = Path(path)
    k = metrics.confusion.shape[0]
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["true\\pred"] + list(range(k)))
        for row in range(k):
            writer.writerow([row] + metrics.confusion[row].tolist())
    return path


def plot_training_curves(records: list[dict], path: str | Path) -> Path:
    """Loss per epoch, with accuracy on a twin axis where recorded."""
    path = Path(path)
    epochs = [r["epoch"] for r in records]
    fig, ax = plt.subplots(figsize=(7, 4.2))
    ax.plot(epochs, [r["train_loss"] for r in records], color="tab:blue", label="train loss")
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss", color="tab:blue")
    ax.tick_params(axis="y", labelcolor="tab:blue")

    acc_points = [(r["epoch"], r["train_accuracy"]) for r in records if "train_accuracy" in r]
    eval_points = [(r["epoch"], r["eval_accuracy"]) for r in records if "eval_accuracy" in r]
    twin = ax.twinx()
    if acc_points:
        twin.plot(*zip(*acc_points), color="tab:green", alpha=0.8, label="train acc")
    if eval_points:
        twin.plot(*zip(*eval_points), color="tab:red", marker="o", ms=3, label="eval acc")
    twin.set_ylabel("accuracy")
    twin.set_ylim(0.0, 1.05)
    lines, labels = ax.get_legend_handles_labels()
    lines2, labels2 = twin.get_legend_handles_labels()
    ax.legend(lines + lines2, labels + labels2, loc="center right", fontsize=9)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def plot_confusion_matrix(metrics: Metrics, path: str | Path) -> Path:
    path = Path(path)
    cm = metrics.confusion
    k = cm.shape[0]
    fig, ax = plt.subplots(figsize=(0.6 * k + 3, 0.6 * k + 2.5))
    image = ax.imshow(cm, cmap="Blues")
    fig.colorbar(image, ax=ax, shrink=0.8)
    threshold = cm.max() / 2 if cm.max() else 0.5
    if k <= 20:
        for i in range(k):
            for j in range(k):
                ax.text(
                    j, i, str(cm[i, j]),
                    ha="center", va="center", fontsize=8,
                    color="white" if cm[i, j] > threshold else "black",
                )
    ax.set_xlabel("predicted")
    ax.set_ylabel("true")
    ax.set_xticks(range(k))
    ax.set_yticks(range(k))
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def plot_class_metrics(metrics: Metrics, path: str | Path) -> Path:
    path = Path(path)
    k = len(metrics.per_class_iou)
    positions = np.arange(k)
    fig, ax = plt.subplots(figsize=(max(5.0, 0.5 * k + 3), 3.8))
    ax.bar(positions - 0.2, metrics.per_class_iou, width=0.4, label="IoU")
    ax.bar(positions + 0.2, metrics.per_class_dsc, width=0.4, label="DSC")
    ax.set_xticks(positions)
    ax.set_xlabel("class")
    ax.set_ylim(0.0, 1.05)
    ax.axhline(1.0, color="gray", lw=0.5, ls=":")
    ax.legend(fontsize=9)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def render_report(
    out_dir: str | Path,
    metrics: Metrics | None = None,
    records: list[dict] | None = None,
) -> list[Path]:
    """Write every applicable table and figure into out_dir.

    Returns the written paths: metrics.csv, confusion.csv, and the
    class-metrics and confusion figures when metrics are given, plus
    the loss-curve figure when training records are given.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    if records:
        written.append(plot_training_curves(records, out_dir / "loss_curve.png"))
    if metrics is not None:
        written.append(write_metrics_csv(metrics, out_dir / "metrics.csv"))
        written.append(write_confusion_csv(metrics, out_dir / "confusion.csv"))
        written.append(plot_confusion_matrix(metrics, out_dir / "confusion_matrix.png"))
        written.append(plot_class_metrics(metrics, out_dir / "class_metrics.png"))
    return written
