"""Delimited reports with matching figures for evaluation, CV and training runs."""

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

FIG_DPI = 120


def _writer(path):
    fh = open(path, "w", newline="", encoding="utf-8")
    return fh, csv.writer(fh)


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=FIG_DPI, metadata={"Software": None})
    plt.close(fig)


def write_eval_report(result, outdir, class_names=None):
    """summary.csv, per_class.csv, confusion.csv and confusion.png."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    k = result.num_classes
    names = list(class_names) if class_names is not None else [str(i) for i in range(k)]
    support = result.confusion.sum(axis=1)

    fh, w = _writer(outdir / "summary.csv")
    with fh:
        w.writerow(["metric", "value"])
        w.writerow(["overall_accuracy", f"{result.overall_accuracy:.6f}"])
        w.writerow(["samples", int(support.sum())])
        w.writerow(["classes", k])
    fh, w = _writer(outdir / "per_class.csv")
    with fh:
        w.writerow(["class", "name", "support", "correct", "accuracy"])
        for i in range(k):
            acc = result.per_class_accuracy[i]
            w.writerow([i, names[i], int(support[i]), int(result.confusion[i, i]),
                        "" if np.isnan(acc) else f"{acc:.6f}"])
    fh, w = _writer(outdir / "confusion.csv")
    with fh:
        w.writerow(["truth\\pred"] + names)
        for i in range(k):
            w.writerow([names[i]] + [int(v) for v in result.confusion[i]])

    size = max(3.5, 0.45 * k + 2)
    fig, ax = plt.subplots(figsize=(size, size))
    im = ax.imshow(result.confusion, cmap="Blues")
    ax.set_xlabel("predicted")
    ax.set_ylabel("true")
    ax.set_title(f"accuracy {result.overall_accuracy:.3f}")
    if k <= 30:
        ax.set_xticks(range(k), names, rotation=90)
        ax.set_yticks(range(k), names)
        peak = result.confusion.max() or 1
        for i in range(k):
            for j in range(k):
                v = result.confusion[i, j]
                if v:
                    ax.text(j, i, str(v), ha="center", va="center", fontsize=8,
                            color="white" if v > peak / 2 else "black")
    fig.colorbar(im, ax=ax, fraction=0.046)
    _save(fig, outdir / "confusion.png")
    return outdir


def write_cv_report(report, outdir):
    """cv.csv (one row per C and fold) and cv.png (mean accuracy against C)."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    fh, w = _writer(outdir / "cv.csv")
    k = report.fold_accuracies.shape[1]
    with fh:
        w.writerow(["C"] + [f"fold{f}" for f in range(k)] + ["mean", "chosen"])
        for C, row in zip(report.grid, report.fold_accuracies):
            w.writerow([repr(C)] + [f"{a:.6f}" for a in row] + [f"{row.mean():.6f}", int(C == report.chosen_C)])

    fig, ax = plt.subplots(figsize=(5, 3.5))
    means = report.mean_accuracies
    spread = report.fold_accuracies.std(axis=1)
    ax.errorbar(report.grid, means, yerr=spread, marker="o", capsize=3)
    ax.axvline(report.chosen_C, color="0.6", ls="--", lw=1)
    ax.set_xscale("log", base=2)
    ax.set_xlabel("C")
    ax.set_ylabel(f"{k}-fold accuracy")
    _save(fig, outdir / "cv.png")
    return outdir


def write_loss_report(losses, outdir):
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    fh, w = _writer(outdir / "loss.csv")
    with fh:
        w.writerow(["epoch", "mean_loss"])
        for e, loss in enumerate(losses, 1):
            w.writerow([e, f"{loss:.8f}"])
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(np.arange(1, len(losses) + 1), losses)
    ax.set_xlabel("epoch")
    ax.set_ylabel("training loss")
    if len(losses) and min(losses) > 0:
        ax.set_yscale("log")
    _save(fig, outdir / "loss.png")
    return outdir
