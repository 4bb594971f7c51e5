"""Hybrid anomaly scoring over context feature vectors.

The detector is built from normal (benign) features only. A seeded
k-means model of the benign features supplies a similarity score

    SS(x) = max_i exp(-||x - mu_i||^2)        (squared Euclidean)

and an isolation forest supplies an isolation score

    IS(x) = 2 ^ ( -E[h(x)] / (2 H(n) - 2 (n - 1) / n) ),

where h(x) is the tree path length, n the per-tree subsample size, and
H(n) is estimated as ln(n) + Euler's constant. The classical normaliser
2 H(n-1) - 2 (n-1)/n is available behind a flag. The two are blended
into a total score

    TS(x) = (1 - theta) * SS(x) + theta * IS(x),   theta in [-1, 0],

calibrated against a threshold alpha (mean of observed-anomaly scores
when labels exist, a benign-score percentile otherwise), and normalised
to an anomaly score AS(x) = TS(x) / max TS over the scored batch.
Samples with TS > alpha are potentially normal; TS <= alpha is flagged
as an anomaly (ties classify as anomaly, failing safe toward
detection).
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DataError,
    DegenerateBatch,
    DimensionMismatch,
    EmptyCalibrationSet,
    InsufficientDistinctPoints,
    InsufficientSamples,
    ThetaOutOfRange,
)

EULER_GAMMA = 0.5772156649
POTENTIALLY_NORMAL = "potentially_normal"
ANOMALY = "anomaly"

_DET_MAGIC = b"PSDT"
_DET_VERSION = 1

_MAX_LLOYD_ITERATIONS = 300


def squared_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Sum of squared per-dimension differences."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatch(f"shape {a.shape} != {b.shape}")
    diff = a - b
    return float(np.dot(diff, diff))


# --- k-means ------------------------------------------------------------------


@dataclass
class ClusterModel:
    centroids: np.ndarray        # (k, d)
    inertia: float               # sum of squared distances to assigned centroids
    seed: int
    diagnostics: dict = field(default_factory=dict)

    @property
    def k(self) -> int:
        return int(self.centroids.shape[0])


def _pairwise_sq(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    diff = points[:, None, :] - centers[None, :, :]
    return np.einsum("nkd,nkd->nk", diff, diff)


def _kmeans_pp_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    centers = np.empty((k, points.shape[1]))
    centers[0] = points[rng.integers(n)]
    closest = np.sum((points - centers[0]) ** 2, axis=1)
    for i in range(1, k):
        total = closest.sum()
        if total <= 0.0:
            centers[i] = points[rng.integers(n)]
        else:
            r = rng.random() * total
            idx = int(np.searchsorted(np.cumsum(closest), r))
            centers[i] = points[min(idx, n - 1)]
        closest = np.minimum(closest, np.sum((points - centers[i]) ** 2, axis=1))
    return centers


def kmeans_fit(features: np.ndarray, k: int, seed: int) -> ClusterModel:
    """Lloyd iterations from seeded k-means++ centres until the
    assignment reaches a fixpoint (or 300 iterations). Refitting with the
    same seed and data reproduces identical centroids."""
    points = np.asarray(features, dtype=np.float64)
    if points.ndim != 2:
        raise DimensionMismatch(f"expected 2-D features, got shape {points.shape}")
    if k < 1:
        raise ValueError("k must be >= 1")
    distinct = np.unique(points, axis=0)
    if distinct.shape[0] < k:
        raise InsufficientDistinctPoints(
            f"need at least {k} distinct vectors, have {distinct.shape[0]}"
        )
    rng = np.random.default_rng(seed)
    centers = _kmeans_pp_init(points, k, rng)
    assignment = np.full(points.shape[0], -1)
    for _ in range(_MAX_LLOYD_ITERATIONS):
        sq = _pairwise_sq(points, centers)
        new_assignment = np.argmin(sq, axis=1)
        for cluster in range(k):
            mask = new_assignment == cluster
            if not np.any(mask):
                # steal the point farthest from its assigned centre
                far = int(np.argmax(sq[np.arange(len(points)), new_assignment]))
                new_assignment[far] = cluster
                mask = new_assignment == cluster
            centers[cluster] = points[mask].mean(axis=0)
        if np.array_equal(new_assignment, assignment):
            break
        assignment = new_assignment
    sq = _pairwise_sq(points, centers)
    inertia = float(sq[np.arange(len(points)), np.argmin(sq, axis=1)].sum())
    return ClusterModel(centroids=centers, inertia=inertia, seed=seed)


def silhouette_score(features: np.ndarray, labels: np.ndarray) -> float:
    """Mean silhouette over samples, with Euclidean distances.

    Singleton clusters contribute 0 for their lone member.
    """
    points = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels)
    unique = np.unique(labels)
    if len(unique) < 2:
        return 0.0
    dists = np.sqrt(np.maximum(_pairwise_sq(points, points), 0.0))
    scores = np.zeros(len(points))
    for i in range(len(points)):
        own = labels == labels[i]
        own_count = int(own.sum())
        if own_count <= 1:
            continue
        a = dists[i, own].sum() / (own_count - 1)
        b = min(dists[i, labels == other].mean() for other in unique if other != labels[i])
        denom = max(a, b)
        scores[i] = (b - a) / denom if denom > 0 else 0.0
    return float(scores.mean())


def assign_clusters(features: np.ndarray, model: ClusterModel) -> np.ndarray:
    sq = _pairwise_sq(np.asarray(features, dtype=np.float64), model.centroids)
    return np.argmin(sq, axis=1)


def select_k(features: np.ndarray, k_range, seed: int) -> ClusterModel:
    """Fit every k in the range; keep the model with the best mean
    silhouette (ties break toward smaller k). Per-k diagnostics are
    attached to the returned model."""
    ks = sorted(set(int(k) for k in k_range))
    if not ks:
        raise ValueError("k_range must be non-empty")
    best: ClusterModel | None = None
    best_score = -math.inf
    diagnostics: dict[int, dict[str, float]] = {}
    for k in ks:
        model = kmeans_fit(features, k, seed)
        score = silhouette_score(features, assign_clusters(features, model))
        diagnostics[k] = {"silhouette": score, "inertia": model.inertia}
        if score > best_score:
            best, best_score = model, score
    assert best is not None
    best.diagnostics = {"per_k": diagnostics, "selected_k": best.k}
    return best


DEFAULT_K_RANGE = (2, 4, 6, 8)


def similarity_scores(features: np.ndarray, model: ClusterModel) -> np.ndarray:
    """SS per row: exp(-squared distance) to the nearest centroid."""
    points = np.atleast_2d(np.asarray(features, dtype=np.float64))
    if points.shape[1] != model.centroids.shape[1]:
        raise DimensionMismatch(
            f"feature width {points.shape[1]} != centroid width {model.centroids.shape[1]}"
        )
    nearest = _pairwise_sq(points, model.centroids).min(axis=1)
    return np.exp(-nearest)


def similarity_score(x: np.ndarray, model: ClusterModel) -> float:
    return float(similarity_scores(np.asarray(x)[None, :], model)[0])


# --- isolation forest -----------------------------------------------------------


def harmonic_estimate(n: float) -> float:
    """H(n) ~ ln(n) + Euler's constant."""
    return math.log(n) + EULER_GAMMA


def paper_normalizer(n: int) -> float:
    """2 H(n) - 2 (n - 1) / n; the truncation adjustment used here."""
    if n <= 1:
        return 0.0
    return 2.0 * harmonic_estimate(n) - 2.0 * (n - 1) / n


def classical_normalizer(n: int) -> float:
    """2 H(n - 1) - 2 (n - 1) / n; the conventional alternative."""
    if n <= 1:
        return 0.0
    return 2.0 * harmonic_estimate(n - 1) - 2.0 * (n - 1) / n


@dataclass
class _TreeNode:
    attribute: int | None = None
    split: float = 0.0
    left: "_TreeNode | None" = None
    right: "_TreeNode | None" = None
    count: int = 0

    @property
    def is_leaf(self) -> bool:
        return self.attribute is None

    def to_jsonable(self):
        if self.is_leaf:
            return {"count": self.count}
        return {
            "attribute": self.attribute,
            "split": self.split,
            "left": self.left.to_jsonable(),
            "right": self.right.to_jsonable(),
        }

    @classmethod
    def from_jsonable(cls, obj) -> "_TreeNode":
        if "count" in obj:
            return cls(count=int(obj["count"]))
        return cls(
            attribute=int(obj["attribute"]),
            split=float(obj["split"]),
            left=cls.from_jsonable(obj["left"]),
            right=cls.from_jsonable(obj["right"]),
        )


def _grow_tree(points: np.ndarray, depth: int, cap: int, rng: np.random.Generator) -> _TreeNode:
    n = points.shape[0]
    if depth >= cap or n <= 1:
        return _TreeNode(count=n)
    lows = points.min(axis=0)
    highs = points.max(axis=0)
    splittable = np.flatnonzero(highs > lows)
    if len(splittable) == 0:
        return _TreeNode(count=n)
    attr = int(splittable[rng.integers(len(splittable))])
    split = float(rng.uniform(lows[attr], highs[attr]))
    mask = points[:, attr] < split
    if not mask.any() or mask.all():
        # uniform draw landed on an extreme; force a non-trivial cut
        mid = 0.5 * (lows[attr] + highs[attr])
        mask = points[:, attr] < mid
        split = mid
        if not mask.any() or mask.all():
            return _TreeNode(count=n)
    left = _grow_tree(points[mask], depth + 1, cap, rng)
    right = _grow_tree(points[~mask], depth + 1, cap, rng)
    return _TreeNode(attribute=attr, split=split, left=left, right=right, count=n)


@dataclass
class IsolationForest:
    trees: list
    subsample: int          # per-tree sample size (paper's n)
    depth_cap: int
    seed: int

    def path_length(self, x: np.ndarray, tree: _TreeNode,
                    leaf_adjustment: str = "paper") -> float:
        depth = 0.0
        node = tree
        while not node.is_leaf:
            node = node.left if x[node.attribute] < node.split else node.right
            depth += 1.0
        adjust = paper_normalizer if leaf_adjustment == "paper" else classical_normalizer
        return depth + adjust(node.count)

    def mean_path_length(self, x: np.ndarray, leaf_adjustment: str = "paper") -> float:
        x = np.asarray(x, dtype=np.float64)
        return float(np.mean([self.path_length(x, t, leaf_adjustment) for t in self.trees]))


def iforest_fit(features: np.ndarray, trees: int = 100, subsample: int = 256,
                seed: int = 0) -> IsolationForest:
    """Grow ``trees`` isolation trees, each on a seeded subsample of
    ``min(subsample, n)`` points, splitting on a uniformly chosen
    attribute at a uniform value inside its observed range, down to
    depth ceil(log2(subsample)) or single-sample nodes."""
    points = np.asarray(features, dtype=np.float64)
    if points.ndim != 2 or points.shape[0] < 2:
        raise InsufficientSamples("isolation forest needs at least 2 samples")
    if trees < 1:
        raise ValueError("tree count must be >= 1")
    psi = min(int(subsample), points.shape[0])
    if psi < 2:
        raise InsufficientSamples("subsample size must be >= 2")
    cap = max(1, math.ceil(math.log2(psi)))
    rng = np.random.default_rng(seed)
    grown = []
    for _ in range(trees):
        idx = rng.choice(points.shape[0], size=psi, replace=False)
        grown.append(_grow_tree(points[idx], 0, cap, rng))
    return IsolationForest(trees=grown, subsample=psi, depth_cap=cap, seed=seed)


def isolation_score(x: np.ndarray, forest: IsolationForest,
                    normalizer: str = "paper") -> float:
    """IS = 2^(-E[h(x)] / normaliser(n)) with n the subsample size."""
    denom = (paper_normalizer if normalizer == "paper" else classical_normalizer)(forest.subsample)
    mean_path = forest.mean_path_length(np.asarray(x, dtype=np.float64), normalizer)
    return 2.0 ** (-mean_path / denom)


def isolation_scores(features: np.ndarray, forest: IsolationForest,
                     normalizer: str = "paper") -> np.ndarray:
    points = np.atleast_2d(np.asarray(features, dtype=np.float64))
    return np.array([isolation_score(p, forest, normalizer) for p in points])


# --- score arithmetic -----------------------------------------------------------


def total_score(ss, is_score, theta: float, theta_range=(-1.0, 0.0)):
    """TS = (1 - theta) * SS + theta * IS; theta range check configurable
    (pass ``theta_range=None`` to disable)."""
    if theta_range is not None and not theta_range[0] <= theta <= theta_range[1]:
        raise ThetaOutOfRange(f"theta={theta} outside [{theta_range[0]}, {theta_range[1]}]")
    return (1.0 - theta) * np.asarray(ss) + theta * np.asarray(is_score)


def calibrate_alpha(calibration_scores) -> float:
    """Mean total score over the calibration set (labelled-anomaly mode)."""
    scores = np.asarray(calibration_scores, dtype=np.float64)
    if scores.size == 0:
        raise EmptyCalibrationSet("no calibration scores")
    return float(scores.mean())


def benign_percentile_alpha(benign_scores, percentile: float = 5.0) -> float:
    """Percentile of benign total scores (no-labels mode)."""
    scores = np.asarray(benign_scores, dtype=np.float64)
    if scores.size == 0:
        raise EmptyCalibrationSet("no benign scores")
    return float(np.percentile(scores, percentile))


def anomaly_scores(ts_values, known_normal=None) -> np.ndarray:
    """AS = TS / max TS over the batch; known-normal entries are pinned
    to exactly 1."""
    ts = np.asarray(ts_values, dtype=np.float64)
    if ts.size == 0:
        raise DegenerateBatch("empty batch")
    top = float(ts.max())
    if top <= 0.0:
        raise DegenerateBatch(f"max total score {top} is not positive")
    out = ts / top
    if known_normal is not None:
        out = out.copy()
        out[np.asarray(known_normal, dtype=bool)] = 1.0
    return out


def classify(ts: float, alpha: float) -> str:
    """TS > alpha -> potentially normal; otherwise anomaly (ties flag)."""
    return POTENTIALLY_NORMAL if ts > alpha else ANOMALY


# --- bundled detector ------------------------------------------------------------


@dataclass(frozen=True)
class DetectorConfig:
    k_range: tuple = DEFAULT_K_RANGE
    theta: float = -0.25
    theta_range: tuple = (-1.0, 0.0)
    trees: int = 100
    subsample: int = 256
    seed: int = 29
    alpha_mode: str = "benign_percentile"   # or "observed_anomalies"
    alpha_percentile: float = 5.0
    normalizer: str = "paper"
    feature_scaling: str = "standardize"    # or "none"

    def to_dict(self) -> dict:
        return {
            "k_range": list(self.k_range), "theta": self.theta,
            "theta_range": list(self.theta_range), "trees": self.trees,
            "subsample": self.subsample, "seed": self.seed,
            "alpha_mode": self.alpha_mode, "alpha_percentile": self.alpha_percentile,
            "normalizer": self.normalizer, "feature_scaling": self.feature_scaling,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "DetectorConfig":
        obj = dict(obj)
        if "k_range" in obj:
            obj["k_range"] = tuple(obj["k_range"])
        if "theta_range" in obj:
            obj["theta_range"] = tuple(obj["theta_range"])
        return cls(**obj)


@dataclass(frozen=True)
class ScoreBundle:
    """Per-sample scores plus the calibration constants they used."""

    similarity: np.ndarray       # SS
    isolation: np.ndarray        # IS
    total: np.ndarray            # TS
    anomaly: np.ndarray          # AS (batch-max normalised)
    labels: list                 # classify() output per sample
    theta: float
    alpha: float
    alpha_mode: str
    calibration_count: int       # L
    forest_sample_size: int      # n
    harmonic: float              # H(n) estimate


class HybridDetector:
    """Clusters + forest + calibration, fitted on benign features only."""

    def __init__(self, config: DetectorConfig):
        self.config = config
        self.cluster_model: ClusterModel | None = None
        self.forest: IsolationForest | None = None
        self.alpha: float | None = None
        self.calibration_count: int = 0
        self._shift: np.ndarray | None = None
        self._scale: np.ndarray | None = None

    def _transform(self, features: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(np.asarray(features, dtype=np.float64))
        if self._shift is None:
            return points
        return (points - self._shift) / self._scale

    def fit(self, benign_features: np.ndarray,
            anomaly_features: np.ndarray | None = None) -> "HybridDetector":
        """Fit clusters and forest on benign features; calibrate alpha
        from labelled anomalies when provided (and configured), else
        from a benign-score percentile."""
        points = np.atleast_2d(np.asarray(benign_features, dtype=np.float64))
        if self.config.feature_scaling == "standardize":
            self._shift = points.mean(axis=0)
            std = points.std(axis=0)
            # guard constant dims; scale so same-cluster distances stay O(1)
            self._scale = np.where(std > 0, std, 1.0) * math.sqrt(2.0 * points.shape[1])
        points = self._transform(benign_features)
        self.cluster_model = select_k(points, self.config.k_range, self.config.seed)
        self.forest = iforest_fit(points, self.config.trees, self.config.subsample,
                                  self.config.seed)
        if self.config.alpha_mode == "observed_anomalies" and anomaly_features is not None:
            ts = self._total_scores(self._transform(anomaly_features))
            self.alpha = calibrate_alpha(ts)
        else:
            ts = self._total_scores(points)
            self.alpha = benign_percentile_alpha(ts, self.config.alpha_percentile)
        self.calibration_count = len(ts)
        return self

    def _total_scores(self, transformed: np.ndarray) -> np.ndarray:
        ss = similarity_scores(transformed, self.cluster_model)
        iso = isolation_scores(transformed, self.forest, self.config.normalizer)
        return total_score(ss, iso, self.config.theta, self.config.theta_range)

    def score(self, features: np.ndarray, known_normal=None) -> ScoreBundle:
        if self.cluster_model is None or self.forest is None or self.alpha is None:
            raise DataError("detector has not been fitted")
        transformed = self._transform(features)
        ss = similarity_scores(transformed, self.cluster_model)
        iso = isolation_scores(transformed, self.forest, self.config.normalizer)
        ts = total_score(ss, iso, self.config.theta, self.config.theta_range)
        as_ = anomaly_scores(ts, known_normal)
        labels = [classify(float(t), self.alpha) for t in ts]
        return ScoreBundle(
            similarity=ss, isolation=iso, total=ts, anomaly=as_, labels=labels,
            theta=self.config.theta, alpha=self.alpha, alpha_mode=self.config.alpha_mode,
            calibration_count=self.calibration_count,
            forest_sample_size=self.forest.subsample,
            harmonic=harmonic_estimate(self.forest.subsample),
        )


def save_detector(detector: HybridDetector, path) -> None:
    """Versioned binary container: JSON header (config, forest, alpha,
    scaler), then the centroid block as raw float64."""
    if detector.cluster_model is None:
        raise DataError("cannot save an unfitted detector")
    header = {
        "container_version": _DET_VERSION,
        "config": detector.config.to_dict(),
        "alpha": detector.alpha,
        "calibration_count": detector.calibration_count,
        "inertia": detector.cluster_model.inertia,
        "cluster_seed": detector.cluster_model.seed,
        "diagnostics": detector.cluster_model.diagnostics,
        "centroid_shape": list(detector.cluster_model.centroids.shape),
        "forest": {
            "subsample": detector.forest.subsample,
            "depth_cap": detector.forest.depth_cap,
            "seed": detector.forest.seed,
            "trees": [t.to_jsonable() for t in detector.forest.trees],
        },
        "scaler": None if detector._shift is None else {
            "shift": detector._shift.tolist(),
            "scale": detector._scale.tolist(),
        },
    }
    payload = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_DET_MAGIC)
        fh.write(struct.pack("<II", _DET_VERSION, len(payload)))
        fh.write(payload)
        fh.write(np.ascontiguousarray(detector.cluster_model.centroids,
                                      dtype=np.float64).tobytes(order="C"))


def load_detector(path) -> HybridDetector:
    with open(path, "rb") as fh:
        if fh.read(4) != _DET_MAGIC:
            raise DataError(f"{path}: not a detector container")
        version, header_len = struct.unpack("<II", fh.read(8))
        if version != _DET_VERSION:
            raise DataError(f"{path}: unsupported detector version {version}")
        header = json.loads(fh.read(header_len).decode("utf-8"))
        shape = tuple(header["centroid_shape"])
        count = int(np.prod(shape, dtype=np.int64))
        raw = fh.read(8 * count)
        if len(raw) != 8 * count:
            raise DataError(f"{path}: truncated detector container")
        centroids = np.frombuffer(raw, dtype=np.float64).reshape(shape).copy()
    detector = HybridDetector(DetectorConfig.from_dict(header["config"]))
    detector.alpha = header["alpha"]
    detector.calibration_count = int(header["calibration_count"])
    detector.cluster_model = ClusterModel(
        centroids=centroids, inertia=float(header["inertia"]),
        seed=int(header["cluster_seed"]),
        diagnostics=header.get("diagnostics", {}),
    )
    forest = header["forest"]
    detector.forest = IsolationForest(
        trees=[_TreeNode.from_jsonable(t) for t in forest["trees"]],
        subsample=int(forest["subsample"]), depth_cap=int(forest["depth_cap"]),
        seed=int(forest["seed"]),
    )
    if header["scaler"] is not None:
        detector._shift = np.asarray(header["scaler"]["shift"], dtype=np.float64)
        detector._scale = np.asarray(header["scaler"]["scale"], dtype=np.float64)
    return detector
