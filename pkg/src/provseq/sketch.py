"""Streaming graph sketches: evolving label histograms folded into
fixed-length feature sequences.

As edges arrive, every destination node's neighbourhood digest is
re-hashed hop by hop (temporal order matters: the same edges delivered
in a different order yield different digests). Digest updates are
counted in a runtime histogram summarising the whole execution so far.
Every ``interval`` edges the histogram is compressed into a fixed-length
vector by consistent weighted sampling, so the index-match rate between
two sketches estimates the weighted Jaccard similarity of the
underlying histograms. The per-graph series of those vectors is the
feature sequence consumed by the sequence model.

Feature sequences serialise to a small binary container (magic bytes,
version, d, n, graph id, row-major float32 data) and to CSV for
debugging.
"""

from __future__ import annotations

import hashlib
import struct
from collections.abc import Iterable
from dataclasses import dataclass

import numpy as np

from .errors import DataError, EmptyGraph, EmptyHistogram
from .ingest import EdgeRecord, GraphStream

_U64 = np.uint64
_FSQ_MAGIC = b"PSF1"
_FSQ_VERSION = 1

# splitmix64 constants; distinct odd offsets select independent substreams
_SM_GAMMA = _U64(0x9E3779B97F4A7C15)
_SM_M1 = _U64(0xBF58476D1CE4E5B9)
_SM_M2 = _U64(0x94D049BB133111EB)
_STREAM_OFFSETS = tuple(_U64(c) for c in (
    0xA24BAED4963EE407,
    0x9FB21C651E98DF25,
    0xD6E8FEB86659FD93,
    0xC2B2AE3D27D4EB4F,
    0x165667B19E3779F9,
))
_DENSE_OFFSET = _U64(0x27D4EB2F165667C5)


def stable_hash64(seed: int, *parts: bytes) -> int:
    """Seeded 64-bit hash of length-prefixed byte parts.

    Length prefixes make the composition unambiguous: hashing
    (b"ab", b"c") never collides with (b"a", b"bc").
    """
    h = hashlib.blake2b(digest_size=8, key=(seed & 0xFFFFFFFFFFFFFFFF).to_bytes(8, "little"))
    for part in parts:
        h.update(struct.pack("<I", len(part)))
        h.update(part)
    return int.from_bytes(h.digest(), "little")


def label_hash(seed: int, *parts) -> int:
    """Hash label components; ints are folded as 8-byte values, strings as UTF-8."""
    encoded = []
    for part in parts:
        if isinstance(part, int):
            encoded.append(part.to_bytes(8, "little"))
        elif isinstance(part, bytes):
            encoded.append(part)
        else:
            encoded.append(str(part).encode("utf-8"))
    return stable_hash64(seed, *encoded)


class WlLabelState:
    """Per-node neighbourhood digests for hops 0..radius.

    Hop 0 depends only on the node's type string. Each arriving edge
    re-hashes the destination's hop-r digest with the edge type and the
    source's hop-(r-1) digest, folding edges in arrival order.
    """

    def __init__(self, radius: int = 3, seed: int = 0):
        if radius < 0:
            raise ValueError("radius must be >= 0")
        self.radius = radius
        self.seed = seed
        self._labels: dict[str, list[int]] = {}

    def _register(self, node_id: str, node_type: str, changed: list[tuple[str, int]]) -> None:
        if node_id in self._labels:
            return
        hop0 = label_hash(self.seed, node_type)
        self._labels[node_id] = [hop0] * (self.radius + 1)
        changed.append((node_id, hop0))

    def update(self, edge: EdgeRecord) -> list[tuple[str, int]]:
        """Fold one edge into the digest state.

        Returns every (node, label hash) whose value changed: hop-0
        labels of newly seen endpoints plus the destination's refreshed
        hop-1..R digests.
        """
        changed: list[tuple[str, int]] = []
        self._register(edge.src_id, edge.src_type, changed)
        self._register(edge.dst_id, edge.dst_type, changed)
        src_snapshot = list(self._labels[edge.src_id])  # pre-edge values, self-loop safe
        dst_labels = self._labels[edge.dst_id]
        etype = edge.edge_type.encode("utf-8")
        for hop in range(1, self.radius + 1):
            new = stable_hash64(
                self.seed,
                dst_labels[hop].to_bytes(8, "little"),
                etype,
                src_snapshot[hop - 1].to_bytes(8, "little"),
            )
            dst_labels[hop] = new
            changed.append((edge.dst_id, new))
        return changed

    def labels_of(self, node_id: str) -> tuple[int, ...]:
        return tuple(self._labels[node_id])

    def label_multiset(self) -> dict[int, int]:
        counts: dict[int, int] = {}
        for hops in self._labels.values():
            for value in hops:
                counts[value] = counts.get(value, 0) + 1
        return counts


def wl_relabel(state: WlLabelState, edge: EdgeRecord) -> list[tuple[str, int]]:
    """Functional alias for :meth:`WlLabelState.update`."""
    return state.update(edge)


class StreamingHistogram:
    """Online label -> weight map over the whole execution history.

    With ``decay`` = 0 every weight is an integer count. With decay
    enabled, all weights are multiplied by (1 - decay) at each sketch
    emission boundary before the next interval's increments.
    """

    def __init__(self, decay: float = 0.0):
        if not 0.0 <= decay <= 1.0:
            raise ValueError("decay must lie in [0, 1]")
        self.decay = decay
        self.counts: dict[int, float] = {}
        self._total = 0.0

    def __len__(self) -> int:
        return len(self.counts)

    @property
    def total_weight(self) -> float:
        return self._total

    def increment(self, labels: Iterable[int]) -> None:
        counts = self.counts
        added = 0
        for lbl in labels:
            counts[lbl] = counts.get(lbl, 0.0) + 1.0
            added += 1
        self._total += float(added)

    def apply_decay(self) -> None:
        if self.decay == 0.0:
            return
        keep = 1.0 - self.decay
        dropped = []
        for lbl in self.counts:
            scaled = self.counts[lbl] * keep
            if scaled == 0.0:
                dropped.append(lbl)
            else:
                self.counts[lbl] = scaled
        for lbl in dropped:
            del self.counts[lbl]
        self._total = self._total * keep if self.counts else 0.0

    def as_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        elements = np.fromiter(self.counts.keys(), dtype=_U64, count=len(self.counts))
        weights = np.fromiter(self.counts.values(), dtype=np.float64, count=len(self.counts))
        return elements, weights


def histogram_update(hist: StreamingHistogram, changed: Iterable[tuple[str, int]]) -> StreamingHistogram:
    """Increment the histogram for each changed label and return it."""
    hist.increment(lbl for _, lbl in changed)
    return hist


def _splitmix64(z: np.ndarray) -> np.ndarray:
    z = (z + _SM_GAMMA).astype(_U64)
    z = (z ^ (z >> _U64(30))) * _SM_M1
    z = (z ^ (z >> _U64(27))) * _SM_M2
    return z ^ (z >> _U64(31))


def _to_unit(z: np.ndarray) -> np.ndarray:
    # strictly inside (0, 1) so logs stay finite
    return ((z >> _U64(11)).astype(np.float64) + 0.5) / float(1 << 53)


@dataclass(frozen=True)
class Sketch:
    """Fixed-length consistent-weighted sample of a histogram.

    ``values[k]`` is the label hash selected at index k, ``levels[k]``
    the sampler's quantisation level for that selection (both must match
    for an index to count as agreeing between two sketches), and
    ``dense[k]`` a signed unit-interval feature derived by hashing the
    selected label with k.
    """

    values: np.ndarray  # uint64, shape (sketch_len,)
    levels: np.ndarray  # int64, shape (sketch_len,)
    dense: np.ndarray   # float32, shape (sketch_len,)

    def __len__(self) -> int:
        return len(self.values)


def sketch_match_fraction(a: Sketch, b: Sketch) -> float:
    """Fraction of indices where both sketches picked the same sample."""
    if len(a) != len(b):
        raise DataError("sketches have different lengths")
    return float(np.mean((a.values == b.values) & (a.levels == b.levels)))


class CwsSampler:
    """Consistent weighted sampler over 64-bit label hashes.

    Each sketch index carries a pre-drawn 64-bit subseed; mixing a
    subseed with a label hash yields that (label, index) pair's two
    Gamma(2,1) variates and one uniform, so the same label always draws
    the same variates at a given index regardless of which other labels
    are present.
    """

    def __init__(self, sketch_len: int, seed: int, chunk_budget: int = 2_000_000):
        if sketch_len < 1:
            raise ValueError("sketch_len must be >= 1")
        self.sketch_len = sketch_len
        self.seed = seed
        self._chunk_budget = chunk_budget
        rng = np.random.default_rng(seed)
        self.index_seeds = rng.integers(0, 2**64, size=sketch_len, dtype=_U64)

    def _rank_block(self, elements: np.ndarray, log_weights: np.ndarray,
                    index_slice: slice) -> tuple[np.ndarray, np.ndarray]:
        """ln-rank and level for elements x indices[index_slice]."""
        mixed = elements[:, None] ^ self.index_seeds[None, index_slice]
        u = [_to_unit(_splitmix64(mixed ^ off)) for off in _STREAM_OFFSETS]
        r = -(np.log(u[0]) + np.log(u[1]))
        c = -(np.log(u[2]) + np.log(u[3]))
        beta = u[4]
        t = np.floor(log_weights[:, None] / r + beta)
        ln_y = r * (t - beta)
        ln_rank = np.log(c) - ln_y - r
        return ln_rank, t.astype(np.int64)

    def rank_matrix(self, elements: np.ndarray, weights: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Full (n_elements, sketch_len) rank and level matrices."""
        log_w = np.log(weights)
        n = len(elements)
        ranks = np.empty((n, self.sketch_len), dtype=np.float64)
        levels = np.empty((n, self.sketch_len), dtype=np.int64)
        step = max(1, self._chunk_budget // max(n, 1))
        for start in range(0, self.sketch_len, step):
            sl = slice(start, min(start + step, self.sketch_len))
            ranks[:, sl], levels[:, sl] = self._rank_block(elements, log_w, sl)
        return ranks, levels

    def dense_values(self, selected: np.ndarray) -> np.ndarray:
        """Signed unit-interval feature from (selected label, index)."""
        mixed = _splitmix64(selected ^ self.index_seeds ^ _DENSE_OFFSET)
        return (2.0 * _to_unit(mixed) - 1.0).astype(np.float32)


def sketch_histogram(hist: StreamingHistogram, sampler: CwsSampler) -> Sketch:
    """Compress a histogram into a fixed-length sketch.

    For each sketch index the sampler picks the histogram element of
    minimum consistent-weighted rank; identical histogram contents with
    the same sampler always produce an identical sketch.
    """
    if len(hist) == 0:
        raise EmptyHistogram("cannot sketch an empty histogram")
    elements, weights = hist.as_arrays()
    ranks, levels = sampler.rank_matrix(elements, weights)
    winner = np.argmin(ranks, axis=0)
    cols = np.arange(sampler.sketch_len)
    values = elements[winner]
    sel_levels = levels[winner, cols]
    dense = sampler.dense_values(values)
    return Sketch(values=values, levels=sel_levels, dense=dense)


class _IncrementalMinState:
    """Running per-index minimum for decay-free streams.

    With no decay, weights only ever grow, and a growing weight can only
    lower its element's rank. It is therefore enough to re-rank the
    labels whose weights changed since the last emission and fold them
    into the stored minima.
    """

    def __init__(self, sampler: CwsSampler):
        self.sampler = sampler
        n = sampler.sketch_len
        self.min_rank = np.full(n, np.inf)
        self.min_elem = np.zeros(n, dtype=_U64)
        self.min_level = np.zeros(n, dtype=np.int64)
        self._seen_any = False

    def update(self, elements: np.ndarray, weights: np.ndarray) -> None:
        if len(elements) == 0:
            return
        ranks, levels = self.sampler.rank_matrix(elements, weights)
        best = np.argmin(ranks, axis=0)
        cols = np.arange(self.sampler.sketch_len)
        cand_rank = ranks[best, cols]
        cand_elem = elements[best]
        cand_level = levels[best, cols]
        if self._seen_any:
            # indices whose stored winner was re-weighted must be refreshed:
            # its new rank can only have decreased, so the changed-set
            # minimum is exact there; elsewhere compare against the store.
            stale = np.isin(self.min_elem, elements)
            take = stale | (cand_rank < self.min_rank)
        else:
            take = np.ones(self.sampler.sketch_len, dtype=bool)
            self._seen_any = True
        self.min_rank[take] = cand_rank[take]
        self.min_elem[take] = cand_elem[take]
        self.min_level[take] = cand_level[take]

    def snapshot(self) -> Sketch:
        values = self.min_elem.copy()
        return Sketch(values=values, levels=self.min_level.copy(),
                      dense=self.sampler.dense_values(values))


@dataclass(frozen=True)
class SketchConfig:
    """Knobs for turning one edge stream into a feature sequence."""

    radius: int = 3
    sketch_len: int = 2000
    interval: int = 3000
    decay: float = 0.0
    seed: int = 7


@dataclass(frozen=True)
class FeatureSequence:
    """Per-graph time series of sketch vectors (n snapshots x d features)."""

    graph_id: str
    vectors: np.ndarray  # float32, shape (n, d)

    @property
    def n(self) -> int:
        return int(self.vectors.shape[0])

    @property
    def d(self) -> int:
        return int(self.vectors.shape[1])


def build_feature_sequence(graph: GraphStream, cfg: SketchConfig) -> FeatureSequence:
    """Process a graph's edges in order and emit one dense sketch row per
    ``interval`` edges (plus a final partial interval), giving
    n = ceil(edge_count / interval) snapshots.

    Deterministic: identical (graph, cfg) pairs produce bit-identical
    sequences.
    """
    if len(graph.edges) == 0:
        raise EmptyGraph(f"graph {graph.graph_id!r} has no edges")
    state = WlLabelState(radius=cfg.radius, seed=cfg.seed)
    hist = StreamingHistogram(decay=cfg.decay)
    sampler = CwsSampler(cfg.sketch_len, cfg.seed)

    incremental = _IncrementalMinState(sampler) if cfg.decay == 0.0 else None
    pending: dict[int, bool] = {}  # labels re-weighted since last emission
    rows: list[np.ndarray] = []

    def emit() -> None:
        if incremental is not None:
            changed = np.fromiter(pending.keys(), dtype=_U64, count=len(pending))
            weights = np.array([hist.counts[int(lbl)] for lbl in changed], dtype=np.float64)
            incremental.update(changed, weights)
            pending.clear()
            rows.append(incremental.snapshot().dense)
        else:
            rows.append(sketch_histogram(hist, sampler).dense)

    count = 0
    for edge in graph.edges:
        changed = state.update(edge)
        hist.increment(lbl for _, lbl in changed)
        if incremental is not None:
            for _, lbl in changed:
                pending[lbl] = True
        count += 1
        if count % cfg.interval == 0:
            emit()
            hist.apply_decay()
    if count % cfg.interval != 0:
        emit()
    return FeatureSequence(graph_id=graph.graph_id, vectors=np.vstack(rows))


# --- serialisation ----------------------------------------------------------

def save_feature_sequence(seq: FeatureSequence, path) -> None:
    """Write the binary container: magic, version, d, n, graph id, f32 data."""
    gid = seq.graph_id.encode("utf-8")
    data = np.ascontiguousarray(seq.vectors, dtype=np.float32)
    with open(path, "wb") as fh:
        fh.write(_FSQ_MAGIC)
        fh.write(struct.pack("<III", _FSQ_VERSION, seq.d, seq.n))
        fh.write(struct.pack("<H", len(gid)))
        fh.write(gid)
        fh.write(data.tobytes(order="C"))


def load_feature_sequence(path) -> FeatureSequence:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _FSQ_MAGIC:
            raise DataError(f"{path}: not a feature-sequence container")
        version, d, n = struct.unpack("<III", fh.read(12))
        if version != _FSQ_VERSION:
            raise DataError(f"{path}: unsupported container version {version}")
        (gid_len,) = struct.unpack("<H", fh.read(2))
        gid = fh.read(gid_len).decode("utf-8")
        raw = fh.read(4 * d * n)
        if len(raw) != 4 * d * n:
            raise DataError(f"{path}: truncated container")
        vectors = np.frombuffer(raw, dtype=np.float32).reshape(n, d).copy()
    return FeatureSequence(graph_id=gid, vectors=vectors)


def feature_sequence_to_csv(seq: FeatureSequence, path) -> None:
    """Debug export: one row per snapshot, columns snapshot,f0..f{d-1}."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("snapshot," + ",".join(f"f{j}" for j in range(seq.d)) + "\n")
        for i in range(seq.n):
            row = ",".join(repr(float(v)) for v in seq.vectors[i])
            fh.write(f"{i},{row}\n")
