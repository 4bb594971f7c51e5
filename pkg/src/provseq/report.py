"""Delimited outputs, JSON reports, and the matplotlib figures rendered
next to them.

All numeric artifacts (CSV, JSON) are byte-reproducible from the run's
config and seeds: floats are written with shortest round-trip repr and
JSON keys are sorted. Figures are rendered with the Agg backend so runs
work headless.
"""

from __future__ import annotations

import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)
import numpy as np  # noqa: E402

from .detector import ScoreBundle  # noqa: E402
from .errors import DataError  # noqa: E402


def _fmt(x) -> str:
    return repr(float(x))


def write_scores_csv(graph_ids, bundle: ScoreBundle, path) -> None:
    """Per-sample scores: ``graph_id,SS,IS,TS,AS,label``."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("graph_id,SS,IS,TS,AS,label\n")
        for i, gid in enumerate(graph_ids):
            fh.write(",".join([
                gid,
                _fmt(bundle.similarity[i]),
                _fmt(bundle.isolation[i]),
                _fmt(bundle.total[i]),
                _fmt(bundle.anomaly[i]),
                bundle.labels[i],
            ]) + "\n")


def read_scores_csv(path):
    """Returns (graph_ids, columns dict) from a scores CSV."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"scores file not found: {path}")
    gids, ss, iso, ts, as_, labels = [], [], [], [], [], []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline()
        if not header.startswith("graph_id,"):
            raise DataError(f"{path}: unexpected scores header {header!r}")
        for line in fh:
            parts = line.rstrip("\n").split(",")
            gids.append(parts[0])
            ss.append(float(parts[1]))
            iso.append(float(parts[2]))
            ts.append(float(parts[3]))
            as_.append(float(parts[4]))
            labels.append(parts[5])
    cols = {"SS": np.array(ss), "IS": np.array(iso), "TS": np.array(ts),
            "AS": np.array(as_), "label": labels}
    return gids, cols


def write_pr_csv(curve, path) -> None:
    """Plot-ready sweep: ``threshold,recall,precision`` rows."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("threshold,recall,precision\n")
        for t, (recall, precision) in zip(curve.thresholds, curve.points):
            tval = "inf" if t == float("inf") else _fmt(t)
            fh.write(f"{tval},{_fmt(recall)},{_fmt(precision)}\n")


def write_features_csv(graph_ids, features: np.ndarray, path) -> None:
    features = np.atleast_2d(features)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("graph_id," + ",".join(f"f{j}" for j in range(features.shape[1])) + "\n")
        for gid, row in zip(graph_ids, features):
            fh.write(gid + "," + ",".join(_fmt(v) for v in row) + "\n")


def read_features_csv(path):
    path = Path(path)
    if not path.exists():
        raise DataError(f"features file not found: {path}")
    gids, rows = [], []
    with open(path, "r", encoding="utf-8") as fh:
        fh.readline()
        for line in fh:
            parts = line.rstrip("\n").split(",")
            gids.append(parts[0])
            rows.append([float(v) for v in parts[1:]])
    return gids, np.array(rows, dtype=np.float64)


def write_loss_csv(losses, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("epoch,loss\n")
        for epoch, loss in enumerate(losses):
            fh.write(f"{epoch},{_fmt(loss)}\n")


def write_json(obj, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, sort_keys=True, indent=2)
        fh.write("\n")


def render_pr_figure(curve, path, title: str = "") -> None:
    fig, ax = plt.subplots(figsize=(5.0, 4.0))
    recall = [r for r, _ in curve.points]
    precision = [p for _, p in curve.points]
    ax.plot(recall, precision, marker="o", markersize=3, lw=1.5)
    ax.set_xlabel("recall")
    ax.set_ylabel("precision")
    ax.set_xlim(-0.02, 1.02)
    ax.set_ylim(-0.02, 1.05)
    ax.grid(alpha=0.3)
    label = f"PR area = {curve.auc:.4f}"
    ax.set_title(f"{title}\n{label}" if title else label)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_loss_figure(losses, path, title: str = "training loss") -> None:
    fig, ax = plt.subplots(figsize=(5.0, 3.5))
    ax.plot(np.arange(len(losses)), losses, lw=1.5)
    ax.set_xlabel("epoch")
    ax.set_ylabel("reconstruction MSE")
    ax.set_yscale("log")
    ax.grid(alpha=0.3)
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_score_figure(truths, anomaly_scores, path, title: str = "anomaly scores") -> None:
    fig, ax = plt.subplots(figsize=(5.0, 3.5))
    benign = [s for t, s in zip(truths, anomaly_scores) if t == "benign"]
    attack = [s for t, s in zip(truths, anomaly_scores) if t == "attack"]
    bins = np.linspace(0.0, 1.0, 30)
    ax.hist(benign, bins=bins, alpha=0.6, label="benign")
    ax.hist(attack, bins=bins, alpha=0.6, label="attack")
    ax.set_xlabel("1 - AS (higher = more anomalous)")
    ax.set_ylabel("graphs")
    ax.legend()
    ax.grid(alpha=0.3)
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
