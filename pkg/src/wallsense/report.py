"""Run comparison reports: metric tables as CSV/JSON plus matplotlib figures.

Figures are rendered headless to PNG files next to the delimited output:
per-epoch training curves, one confusion-matrix heatmap per run, and grouped
per-activity accuracy bars across runs.
"""
from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .schemas import validate_train_report
from .storage import read_json, write_json

METRIC_COLUMNS = ("accuracy", "macro_precision", "macro_recall", "macro_f1")

# Fixed PNG metadata keeps report artifacts byte-reproducible across reruns.
PNG_METADATA = {"Software": "wallsense"}


def _save(fig, path: str) -> None:
    fig.tight_layout()
    fig.savefig(path, dpi=150, metadata=PNG_METADATA)
    plt.close(fig)


def write_csv(path: str, header: list[str], rows: list[list]) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_cell(v) for v in row))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def _cell(v) -> str:
    if isinstance(v, float):
        return f"{v:.10g}"
    return str(v)


def plot_epoch_curves(runs: dict[str, dict], path: str) -> None:
    fig, (ax_loss, ax_acc) = plt.subplots(1, 2, figsize=(9, 3.5))
    for name, rep in runs.items():
        epochs = [e["epoch"] for e in rep["epochs"]]
        ax_loss.plot(epochs, [e["train_loss"] for e in rep["epochs"]], label=name)
        ax_acc.plot(epochs, [e["val_accuracy"] for e in rep["epochs"]], label=name)
    ax_loss.set_xlabel("epoch")
    ax_loss.set_ylabel("train loss")
    ax_acc.set_xlabel("epoch")
    ax_acc.set_ylabel("val accuracy")
    ax_acc.set_ylim(0.0, 1.02)
    ax_loss.legend(fontsize=8)
    _save(fig, path)


def plot_confusion(cm: np.ndarray, class_names: list[str], path: str,
                   title: str = "") -> None:
    cm = np.asarray(cm, dtype=float)
    fig, ax = plt.subplots(figsize=(5, 4.2))
    im = ax.imshow(cm, cmap="Blues")
    ax.set_xticks(range(len(class_names)))
    ax.set_yticks(range(len(class_names)))
    ax.set_xticklabels(class_names, rotation=45, ha="right", fontsize=8)
    ax.set_yticklabels(class_names, fontsize=8)
    ax.set_xlabel("predicted")
    ax.set_ylabel("true")
    if title:
        ax.set_title(title, fontsize=10)
    thresh = cm.max() / 2.0 if cm.max() > 0 else 0.5
    for i in range(cm.shape[0]):
        for j in range(cm.shape[1]):
            ax.text(j, i, f"{int(cm[i, j])}", ha="center", va="center", fontsize=7,
                    color="white" if cm[i, j] > thresh else "black")
    fig.colorbar(im, ax=ax, shrink=0.85)
    _save(fig, path)


def plot_per_class_accuracy(per_run: dict[str, list[float]], class_names: list[str],
                            path: str) -> None:
    fig, ax = plt.subplots(figsize=(7.5, 3.5))
    n_runs = len(per_run)
    width = 0.8 / max(n_runs, 1)
    x = np.arange(len(class_names))
    for k, (name, values) in enumerate(per_run.items()):
        ax.bar(x + (k - (n_runs - 1) / 2.0) * width, values, width, label=name)
    ax.set_xticks(x)
    ax.set_xticklabels(class_names, rotation=30, ha="right", fontsize=8)
    ax.set_ylabel("per-class accuracy")
    ax.set_ylim(0.0, 1.05)
    ax.legend(fontsize=8)
    _save(fig, path)


def build_report(run_dirs: list[str], out_dir: str) -> dict:
    """Collect per-run reports into a comparison table plus figures.

    Each run directory must contain train_report.json (written by the train
    command); class names and confusion matrices come from its test metrics.
    """
    os.makedirs(out_dir, exist_ok=True)
    fig_dir = os.path.join(out_dir, "figures")
    os.makedirs(fig_dir, exist_ok=True)

    runs = {}
    for d in run_dirs:
        name = os.path.basename(os.path.normpath(d))
        runs[name] = read_json(os.path.join(d, "train_report.json"))
        validate_train_report(runs[name])

    rows = []
    per_class = {}
    class_names = None
    for name, rep in runs.items():
        m = rep["test_metrics"]
        rows.append([name, m["accuracy"], m["macro_precision"],
                     m["macro_recall"], m["macro_f1"]])
        per_class[name] = m["per_class_recall"]
        class_names = rep.get("class_names", class_names)
        plot_confusion(np.asarray(m["confusion_matrix"]), rep["class_names"],
                       os.path.join(fig_dir, f"confusion_{name}.png"), title=name)

    write_csv(os.path.join(out_dir, "report.csv"),
              ["run", *METRIC_COLUMNS], rows)
    plot_epoch_curves(runs, os.path.join(fig_dir, "epoch_curves.png"))
    if class_names:
        plot_per_class_accuracy(per_class, class_names,
                                os.path.join(fig_dir, "per_class_accuracy.png"))

    # Plot-ready series ride along in the JSON so downstream tooling does not
    # have to re-parse the per-run reports.
    summary = {
        "runs": {
            name: {
                "metrics": rep["test_metrics"],
                "epoch_series": rep["epochs"],
                "per_class_accuracy": rep["test_metrics"]["per_class_recall"],
            }
            for name, rep in runs.items()
        },
        "figures": sorted(os.listdir(fig_dir)),
    }
    write_json(os.path.join(out_dir, "report.json"), summary)
    return summary
