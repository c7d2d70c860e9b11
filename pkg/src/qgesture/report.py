"""Matplotlib figure rendering for reports: written to files next to the
CSV outputs (headless Agg backend)."""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .features import CHANNEL_ORDER


def save_history_csv(history, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=["epoch", "train_loss", "val_acc", "lr"])
        writer.writeheader()
        writer.writerows(history)


def save_history_figure(history, path) -> None:
    epochs = [h["epoch"] for h in history]
    fig, ax1 = plt.subplots(figsize=(7, 4))
    ax1.plot(epochs, [h["train_loss"] for h in history], color="tab:blue", label="train loss")
    ax1.set_xlabel("epoch")
    ax1.set_ylabel("train loss", color="tab:blue")
    ax2 = ax1.twinx()
    ax2.plot(epochs, [h["val_acc"] for h in history], color="tab:orange", label="val accuracy")
    ax2.set_ylabel("val accuracy", color="tab:orange")
    ax2.set_ylim(0, 1.02)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_confusion_csv(report, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["truth\\pred"] + report.labels)
        for label, row in zip(report.labels, report.confusion):
            writer.writerow([label] + [int(v) for v in row])


def save_confusion_figure(report, path) -> None:
    cm = np.asarray(report.confusion, dtype=float)
    norm = cm / np.maximum(cm.sum(axis=1, keepdims=True), 1)
    fig, ax = plt.subplots(figsize=(7, 6))
    im = ax.imshow(norm, cmap="Blues", vmin=0, vmax=1)
    ax.set_xticks(range(len(report.labels)), report.labels, rotation=45, ha="right", fontsize=8)
    ax.set_yticks(range(len(report.labels)), report.labels, fontsize=8)
    ax.set_xlabel("predicted")
    ax.set_ylabel("true")
    for i in range(cm.shape[0]):
        for j in range(cm.shape[1]):
            if cm[i, j]:
                ax.text(j, i, int(cm[i, j]), ha="center", va="center",
                        color="white" if norm[i, j] > 0.5 else "black", fontsize=7)
    fig.colorbar(im, ax=ax, fraction=0.046)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_group_report_csv(report, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["scene", "user", "n", "accuracy"])
        for (scene, user), g in sorted(report.groups.items()):
            writer.writerow([scene, user, g["n"], f"{g['accuracy']:.4f}"])
        writer.writerow(["all", "all", int(report.confusion.sum()), f"{report.accuracy:.4f}"])


def save_group_accuracy_figure(report, path) -> None:
    keys = sorted(report.groups)
    fig, ax = plt.subplots(figsize=(8, 4))
    vals = [report.groups[k]["accuracy"] for k in keys]
    names = [f"{s}\n{u}" for s, u in keys]
    ax.bar(range(len(keys)), vals, color="tab:green")
    ax.set_xticks(range(len(keys)), names, fontsize=8)
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("accuracy")
    ax.axhline(report.accuracy, color="gray", linestyle="--", linewidth=1, label="overall")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_feature_window_figure(window, path) -> None:
    fig, axes = plt.subplots(1, 3, figsize=(9, 3.2))
    for c, (ax, name) in enumerate(zip(axes, CHANNEL_ORDER)):
        ax.imshow(window.values[c], aspect="auto", origin="lower", cmap="viridis")
        ax.set_title(name.upper())
        ax.set_xlabel("frame")
        if c == 0:
            ax.set_ylabel("bin")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def ensure_dir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p
