"""Threshold sweeps, PR curves and areas, and dataset splitting.

Scores here follow the *anomaly* direction: higher means more
anomalous. The pipeline derives them as 1 - AS (batch-normalised total
score), since known-normal points normalise to 1. A positive prediction
at threshold t means score >= t, with attack as the positive class.
"""

from __future__ import annotations

import math
from collections import namedtuple
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateCurve, EmptyBenignPool, NoPositiveSamples

ATTACK = "attack"
BENIGN = "benign"

Confusion = namedtuple("Confusion", ["tp", "fp", "fn", "tn"])


@dataclass(frozen=True)
class LabeledScore:
    graph_id: str
    score: float       # higher = more anomalous
    truth: str         # "benign" | "attack"


@dataclass(frozen=True)
class PrCurve:
    """Recall/precision pairs swept over every distinct score, sorted by
    recall, plus the matching thresholds and the curve area."""

    points: tuple            # ((recall, precision), ...)
    thresholds: tuple
    auc: float


def confusion(scores: Sequence[LabeledScore], threshold: float) -> Confusion:
    """Counts at one threshold; prediction is positive iff score >= t."""
    tp = fp = fn = tn = 0
    for s in scores:
        predicted_positive = s.score >= threshold
        actual_positive = s.truth == ATTACK
        if predicted_positive and actual_positive:
            tp += 1
        elif predicted_positive:
            fp += 1
        elif actual_positive:
            fn += 1
        else:
            tn += 1
    return Confusion(tp, fp, fn, tn)


def pr_curve(scores: Sequence[LabeledScore], auc_method: str = "trapezoid") -> PrCurve:
    """Sweep thresholds at every distinct score (plus a sentinel above
    the maximum so the curve starts at recall 0). Precision at zero
    predicted positives is defined as 1."""
    scores = list(scores)
    positives = sum(1 for s in scores if s.truth == ATTACK)
    if positives == 0:
        raise NoPositiveSamples("PR curve needs at least one attack sample")
    distinct = sorted({s.score for s in scores}, reverse=True)
    thresholds = [math.inf] + distinct
    points = []
    for t in thresholds:
        c = confusion(scores, t)
        precision = c.tp / (c.tp + c.fp) if (c.tp + c.fp) > 0 else 1.0
        recall = c.tp / (c.tp + c.fn)
        points.append((recall, precision))
    # descending thresholds give non-decreasing recall, i.e. recall order
    pts = tuple(points)
    ths = tuple(thresholds)
    area = pr_auc(pts, method=auc_method)
    return PrCurve(points=pts, thresholds=ths, auc=area)


def pr_auc(points, method: str = "trapezoid") -> float:
    """Area under recall/precision points.

    ``trapezoid`` integrates linearly over recall; ``step`` holds each
    segment at the precision of its higher-recall endpoint.
    """
    # stable on recall only: equal-recall points keep their sweep order
    pts = sorted(points, key=lambda rp: rp[0])
    if len(pts) < 2:
        raise DegenerateCurve("area needs at least 2 points")
    area = 0.0
    for (r0, p0), (r1, p1) in zip(pts, pts[1:]):
        width = r1 - r0
        if width <= 0:
            continue
        if method == "trapezoid":
            area += width * (p0 + p1) / 2.0
        elif method == "step":
            area += width * p1
        else:
            raise ValueError(f"unknown auc method {method!r}")
    return float(min(max(area, 0.0), 1.0))


def split_dataset(labels: Mapping[str, str], train_fraction: float, seed: int):
    """Seeded benign-only training split.

    Returns ``(train_ids, test_ids)``: a shuffled ``train_fraction`` of
    the benign graphs for training, everything else (remaining benign
    plus all attack graphs) for testing. Both lists come back sorted;
    membership is a pure function of (labels, fraction, seed).
    """
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    benign = sorted(g for g, lab in labels.items() if lab == BENIGN)
    attack = sorted(g for g, lab in labels.items() if lab != BENIGN)
    if not benign:
        raise EmptyBenignPool("no benign graphs to train on")
    rng = np.random.default_rng(seed)
    shuffled = [benign[i] for i in rng.permutation(len(benign))]
    take = max(1, int(math.floor(train_fraction * len(benign) + 0.5)))
    take = min(take, len(benign) - 1) if len(benign) > 1 else take
    train = sorted(shuffled[:take])
    test = sorted(shuffled[take:] + attack)
    return train, test


def scores_from_anomaly_values(graph_ids: Iterable[str], anomaly_values,
                               truth: Mapping[str, str]) -> list[LabeledScore]:
    """Bundle ids, anomaly-direction scores, and manifest truth."""
    out = []
    for gid, value in zip(graph_ids, anomaly_values):
        out.append(LabeledScore(graph_id=gid, score=float(value), truth=truth[gid]))
    return out
