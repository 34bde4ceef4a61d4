"""Metrics tables and figures.

A report document is plain JSON: ``rows`` holds one entry per (fold,
variant) with metric values, ``summary`` the per-variant mean and std.
``render`` turns it into a tab-separated table plus PNG figures.
"""
from __future__ import annotations

import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .body import PARENTS  # noqa: E402
from .metrics import aggregate  # noqa: E402

METRIC_ORDER = ("mpjpe_mm", "pa_mpjpe_mm", "mpve_mm", "fid_k", "fid_g", "r_precision", "token_accuracy")


def summarize(rows):
    """Per-variant mean and sample std of every numeric metric across folds."""
    out = {}
    for variant in sorted({r["variant"] for r in rows}):
        sel = [r for r in rows if r["variant"] == variant]
        keys = [k for k in METRIC_ORDER if all(k in r for r in sel)]
        out[variant] = {k: aggregate([r[k] for r in sel]) for k in keys}
        out[variant]["folds"] = len(sel)
    return out


def table_lines(rows, sep="\t"):
    keys = [k for k in METRIC_ORDER if any(k in r for r in rows)]
    lines = [sep.join(["fold", "held_out", "variant"] + keys)]
    for r in rows:
        vals = [f"{r[k]:.6g}" if k in r else "" for k in keys]
        lines.append(sep.join([str(r["fold"]), str(r.get("held_out", "")), r["variant"]] + vals))
    return lines


def summary_lines(summary, sep="\t"):
    keys = [k for k in METRIC_ORDER if any(k in v for v in summary.values())]
    lines = [sep.join(["variant", "folds"] + keys)]
    for variant, stats in summary.items():
        vals = [f"{stats[k]['mean']:.4g} ± {stats[k]['std']:.2g}" if k in stats else "" for k in keys]
        lines.append(sep.join([variant, str(stats["folds"])] + vals))
    return lines


def format_report(doc):
    """Delimited text: a per-fold block and a summary block."""
    out = ["# ---- per fold ----"] + table_lines(doc["rows"])
    out += ["# ---- summary (mean ± std over folds) ----"] + summary_lines(doc["summary"])
    if doc.get("notes"):
        out += ["# ---- notes ----"] + list(doc["notes"])
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# figures

def plot_metric_bars(summary, path, metric="mpjpe_mm"):
    variants = [v for v in summary if metric in summary[v]]
    fig, ax = plt.subplots(figsize=(5, 3.2))
    means = [summary[v][metric]["mean"] for v in variants]
    stds = [summary[v][metric]["std"] for v in variants]
    ax.bar(variants, means, yerr=stds, color="#4c72b0", capsize=4)
    ax.set_ylabel(metric.replace("_", " "))
    ax.set_title(f"{metric} by model variant")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_pressure(frame, path, title="pressure (mmHg)"):
    fig, ax = plt.subplots(figsize=(3, 6))
    im = ax.imshow(np.asarray(frame), cmap="viridis", origin="lower", aspect="auto")
    fig.colorbar(im, ax=ax, shrink=0.8)
    ax.set_xlabel("column")
    ax.set_ylabel("row")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def _draw_skeleton(ax, pos, a, b, color, label):
    for j, p in enumerate(PARENTS):
        if p >= 0:
            ax.plot([pos[p, a], pos[j, a]], [pos[p, b], pos[j, b]], color=color, lw=2,
                    label=label if j == 1 else None)
    ax.scatter(pos[:, a], pos[:, b], s=8, color=color)


def plot_pose_comparison(pred, gt, path, title="predicted vs ground truth"):
    """Side and front views of one frame of joint positions ``(J, 3)``."""
    fig, axes = plt.subplots(1, 2, figsize=(7, 4))
    for ax, (a, b, name) in zip(axes, ((0, 2, "side (x-z)"), (1, 2, "front (y-z)"))):
        _draw_skeleton(ax, np.asarray(gt), a, b, "#333333", "ground truth")
        _draw_skeleton(ax, np.asarray(pred), a, b, "#dd8452", "predicted")
        ax.set_aspect("equal")
        ax.set_title(name)
    axes[0].legend(loc="lower left", fontsize=8)
    fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_curves(curves, path):
    """Training and validation loss per named run: ``{name: {"train": [...], "val": [...]}}``."""
    fig, ax = plt.subplots(figsize=(5, 3.2))
    for name, c in curves.items():
        ax.plot(c["train"], label=f"{name} train")
        if c.get("val"):
            ax.plot(c["val"], "--", label=f"{name} val")
    ax.set_yscale("log")
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_posture(flexion, tilt, threshold, path):
    fig, ax = plt.subplots(figsize=(6, 3))
    t = np.arange(len(flexion)) / 15.0
    ax.plot(t, flexion, label="lumbar flexion")
    ax.plot(t, tilt, label="thoracic tilt")
    ax.axhline(threshold, color="red", ls=":", label="slouch threshold")
    ax.set_xlabel("time (s)")
    ax.set_ylabel("degrees")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def render(doc, out_dir):
    """Write ``report.tsv``, ``report.txt`` and figures; returns the written paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    (out / "report.tsv").write_text("\n".join(table_lines(doc["rows"])) + "\n")
    (out / "report.txt").write_text(format_report(doc))
    written += [out / "report.tsv", out / "report.txt"]
    for metric in ("mpjpe_mm", "pa_mpjpe_mm"):
        if any(metric in v for v in doc["summary"].values()):
            written.append(plot_metric_bars(doc["summary"], out / f"{metric}.png", metric))
    ex = doc.get("example")
    if ex:
        written.append(plot_pressure(ex["pressure"], out / "pressure_example.png"))
        for variant, pred in ex.get("predicted", {}).items():
            written.append(plot_pose_comparison(pred, ex["ground_truth"], out / f"pose_{variant}.png",
                                                f"{variant}: predicted vs ground truth"))
    if doc.get("curves"):
        written.append(plot_curves(doc["curves"], out / "training_curves.png"))
    post = doc.get("posture")
    if post:
        written.append(plot_posture([f["lumbar_flexion_deg"] for f in post["frames"]],
                                    [f["thoracic_tilt_deg"] for f in post["frames"]],
                                    post["slouch_threshold_deg"], out / "posture.png"))
    return written


def load_report(path):
    return json.loads(Path(path).read_text())
