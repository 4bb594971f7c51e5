import math

import numpy as np
import pytest

from provseq.errors import EmptyGraph, EmptyHistogram
from provseq.ingest import EdgeRecord, GraphStream
from provseq.sketch import (
    CwsSampler,
    FeatureSequence,
    SketchConfig,
    StreamingHistogram,
    WlLabelState,
    build_feature_sequence,
    feature_sequence_to_csv,
    histogram_update,
    label_hash,
    load_feature_sequence,
    save_feature_sequence,
    sketch_histogram,
    sketch_match_fraction,
    stable_hash64,
    wl_relabel,
)


def _edge(src, src_t, dst, dst_t, etype, seq=0, gid="g"):
    return EdgeRecord(src, src_t, dst, dst_t, etype, gid, seq)


def _graph(edges, gid="g", label=None):
    return GraphStream(graph_id=gid, edges=tuple(edges), label=label)


# --- hashing -----------------------------------------------------------------


def test_hash_is_seeded_and_stable():
    a = stable_hash64(1, b"abc")
    assert a == stable_hash64(1, b"abc")
    assert a != stable_hash64(2, b"abc")
    assert 0 <= a < 2**64


def test_length_prefixing_disambiguates_composition():
    assert stable_hash64(0, b"ab", b"c") != stable_hash64(0, b"a", b"bc")


# --- WL relabeling -----------------------------------------------------------


def test_first_edge_unrolls_the_definition():
    seed = 5
    state = WlLabelState(radius=1, seed=seed)
    changed = state.update(_edge("a", "ta", "b", "tb", "X"))
    hop0_a = label_hash(seed, "ta")
    hop0_b = label_hash(seed, "tb")
    hop1_b = label_hash(seed, hop0_b, "X", hop0_a)
    assert ("a", hop0_a) in changed
    assert ("b", hop0_b) in changed
    assert ("b", hop1_b) in changed
    assert state.labels_of("b") == (hop0_b, hop1_b)


def test_identical_edge_lists_give_identical_label_multisets():
    edges = [
        _edge("a", "p", "b", "f", "read", 0),
        _edge("b", "f", "c", "p", "exec", 1),
        _edge("a", "p", "c", "p", "fork", 2),
    ]
    s1 = WlLabelState(radius=3, seed=9)
    s2 = WlLabelState(radius=3, seed=9)
    for e in edges:
        s1.update(e)
        s2.update(e)
    assert s1.label_multiset() == s2.label_multiset()


def test_swapped_arrival_order_changes_the_digest():
    # oracle: compose both digests explicitly from the hash helper
    seed = 3
    h0 = lambda t: label_hash(seed, t)
    fold = lambda base, etype, src: label_hash(seed, base, etype, src)

    forward = WlLabelState(radius=1, seed=seed)
    forward.update(_edge("a", "ta", "b", "tb", "X", 0))
    forward.update(_edge("c", "tc", "b", "tb", "Y", 1))
    expect_forward = fold(fold(h0("tb"), "X", h0("ta")), "Y", h0("tc"))
    assert forward.labels_of("b")[1] == expect_forward

    swapped = WlLabelState(radius=1, seed=seed)
    swapped.update(_edge("c", "tc", "b", "tb", "Y", 0))
    swapped.update(_edge("a", "ta", "b", "tb", "X", 1))
    expect_swapped = fold(fold(h0("tb"), "Y", h0("tc")), "X", h0("ta"))
    assert swapped.labels_of("b")[1] == expect_swapped
    assert expect_forward != expect_swapped


def test_wl_relabel_functional_alias():
    edge = _edge("a", "p", "b", "f", "w")
    s1 = WlLabelState(radius=2, seed=0)
    s2 = WlLabelState(radius=2, seed=0)
    assert wl_relabel(s1, edge) == s2.update(edge)


# --- streaming histogram -----------------------------------------------------


def test_three_distinct_labels_three_unit_weights():
    hist = StreamingHistogram()
    hist.increment([1, 2, 3])
    assert hist.counts == {1: 1.0, 2: 1.0, 3: 1.0}
    assert hist.total_weight == 3.0


def test_same_label_twice_weights_two():
    hist = StreamingHistogram()
    hist.increment([7, 7])
    assert hist.counts[7] == 2.0


def test_decay_halves_then_increments():
    # 4 * 0.5 + 1 = 3
    hist = StreamingHistogram(decay=0.5)
    hist.increment([42] * 4)
    hist.apply_decay()
    hist.increment([42])
    assert hist.counts[42] == 3.0


def test_total_weight_tracks_sum_within_tolerance():
    rng = np.random.default_rng(11)
    hist = StreamingHistogram(decay=0.25)
    for _ in range(200):
        hist.increment(rng.integers(0, 50, size=rng.integers(1, 10)).tolist())
        if rng.random() < 0.3:
            hist.apply_decay()
    total = sum(hist.counts.values())
    assert hist.total_weight == pytest.approx(total, rel=1e-9)


def test_histogram_update_counts_changed_labels():
    state = WlLabelState(radius=2, seed=1)
    hist = StreamingHistogram()
    histogram_update(hist, state.update(_edge("a", "p", "b", "f", "w")))
    # two hop-0 registrations plus hop-1..2 digests of the destination
    assert hist.total_weight == 4.0


# --- consistent weighted sampling ---------------------------------------------


def test_identical_histograms_match_exactly():
    hist = StreamingHistogram()
    hist.increment([1, 2, 2, 3])
    sampler = CwsSampler(sketch_len=64, seed=5)
    s1 = sketch_histogram(hist, sampler)
    s2 = sketch_histogram(hist, sampler)
    assert np.array_equal(s1.values, s2.values)
    assert np.array_equal(s1.levels, s2.levels)
    assert np.array_equal(s1.dense, s2.dense)
    assert sketch_match_fraction(s1, s2) == 1.0


def test_disjoint_singletons_never_match():
    h1 = StreamingHistogram()
    h1.increment([111])
    h2 = StreamingHistogram()
    h2.increment([999])
    sampler = CwsSampler(sketch_len=128, seed=5)
    frac = sketch_match_fraction(sketch_histogram(h1, sampler), sketch_histogram(h2, sampler))
    assert frac == 0.0


def test_sketch_length_is_fixed_regardless_of_cardinality():
    sampler = CwsSampler(sketch_len=50, seed=1)
    for size in (1, 10, 500):
        hist = StreamingHistogram()
        hist.increment(range(size))
        assert len(sketch_histogram(hist, sampler)) == 50


def test_empty_histogram_rejected():
    with pytest.raises(EmptyHistogram):
        sketch_histogram(StreamingHistogram(), CwsSampler(8, 0))


def test_dense_view_is_signed_unit_interval():
    hist = StreamingHistogram()
    hist.increment(range(20))
    sk = sketch_histogram(hist, CwsSampler(256, 3))
    assert np.all(sk.dense >= -1.0) and np.all(sk.dense <= 1.0)
    assert sk.dense.dtype == np.float32


def _weighted_jaccard(a: dict, b: dict) -> float:
    keys = set(a) | set(b)
    num = sum(min(a.get(k, 0.0), b.get(k, 0.0)) for k in keys)
    den = sum(max(a.get(k, 0.0), b.get(k, 0.0)) for k in keys)
    return num / den


@pytest.mark.parametrize("wa,wb", [
    # equal weights on the shared support
    ({1: 2.0, 2: 1.0, 3: 3.0}, {2: 1.0, 3: 3.0, 4: 5.0}),
    # unequal shared weights
    ({1: 4.0, 2: 1.0, 3: 2.0, 4: 1.0}, {1: 1.0, 2: 2.0, 3: 2.0, 5: 3.0}),
    # ten-element supports
    ({k: float(k) for k in range(1, 11)}, {k: float(11 - k) for k in range(1, 11)}),
])
def test_match_fraction_estimates_weighted_jaccard(wa, wb):
    # oracle: exact weighted Jaccard on small support; statistical band
    # of three standard errors over 50 seed draws at sketch length 500
    sketch_len, draws = 500, 50
    expected = _weighted_jaccard(wa, wb)
    ha = StreamingHistogram()
    ha.counts.update(wa)
    hb = StreamingHistogram()
    hb.counts.update(wb)
    fractions = []
    for seed in range(draws):
        sampler = CwsSampler(sketch_len=sketch_len, seed=seed)
        fractions.append(sketch_match_fraction(
            sketch_histogram(ha, sampler), sketch_histogram(hb, sampler)))
    mean = float(np.mean(fractions))
    se = math.sqrt(expected * (1 - expected) / (sketch_len * draws))
    assert abs(mean - expected) <= 3 * se, f"mean {mean} vs J {expected} (3se={3*se})"


# --- feature sequences ----------------------------------------------------------


def _routine_edges(count, gid="g", seed=0):
    rng = np.random.default_rng(seed)
    types = ["proc", "file", "sock"]
    etypes = ["read", "write", "fork", "send"]
    edges = []
    for i in range(count):
        edges.append(EdgeRecord(
            f"n{rng.integers(20)}", types[rng.integers(3)],
            f"n{rng.integers(20)}", types[rng.integers(3)],
            etypes[rng.integers(4)], gid, i))
    return edges


def test_snapshot_count_full_intervals():
    cfg = SketchConfig(radius=2, sketch_len=16, interval=5, seed=1)
    seq = build_feature_sequence(_graph(_routine_edges(10)), cfg)
    assert seq.n == 2
    assert seq.d == 16


def test_snapshot_count_partial_final_interval():
    cfg = SketchConfig(radius=2, sketch_len=16, interval=5, seed=1)
    seq = build_feature_sequence(_graph(_routine_edges(11)), cfg)
    assert seq.n == 3


def test_empty_graph_rejected():
    with pytest.raises(EmptyGraph):
        build_feature_sequence(_graph([]), SketchConfig())


def test_sequence_is_deterministic_bit_for_bit():
    cfg = SketchConfig(radius=3, sketch_len=32, interval=7, seed=21)
    g = _graph(_routine_edges(40, seed=2))
    a = build_feature_sequence(g, cfg)
    b = build_feature_sequence(g, cfg)
    assert a.vectors.tobytes() == b.vectors.tobytes()


def test_prefix_property_streaming_equals_batch():
    # S_i from the first i*B edges equals S_i from the full stream, and
    # both equal a from-scratch sketch of the prefix histogram (this
    # also cross-checks the incremental sampler against full recompute)
    cfg = SketchConfig(radius=2, sketch_len=32, interval=10, seed=4)
    edges = _routine_edges(35, seed=5)
    full = build_feature_sequence(_graph(edges), cfg)
    for i in (1, 2, 3):
        prefix = build_feature_sequence(_graph(edges[: i * cfg.interval]), cfg)
        assert np.array_equal(prefix.vectors[i - 1], full.vectors[i - 1])

    state = WlLabelState(radius=cfg.radius, seed=cfg.seed)
    hist = StreamingHistogram()
    sampler = CwsSampler(cfg.sketch_len, cfg.seed)
    for k, e in enumerate(edges, start=1):
        hist.increment(lbl for _, lbl in state.update(e))
        if k % cfg.interval == 0:
            snap = sketch_histogram(hist, sampler)
            assert np.array_equal(snap.dense, full.vectors[k // cfg.interval - 1])
    # the final partial snapshot also equals a from-scratch recompute
    assert np.array_equal(sketch_histogram(hist, sampler).dense, full.vectors[-1])


def test_decayed_sequences_differ_from_undecayed():
    edges = _routine_edges(40, seed=6)
    plain = build_feature_sequence(_graph(edges), SketchConfig(sketch_len=32, interval=10, seed=1))
    decayed = build_feature_sequence(
        _graph(edges), SketchConfig(sketch_len=32, interval=10, seed=1, decay=0.9))
    assert plain.vectors.shape == decayed.vectors.shape
    assert not np.array_equal(plain.vectors[-1], decayed.vectors[-1])


def test_container_round_trip(tmp_path):
    cfg = SketchConfig(radius=2, sketch_len=24, interval=6, seed=8)
    seq = build_feature_sequence(_graph(_routine_edges(20, seed=9), gid="graph/17"), cfg)
    path = tmp_path / "g.fsq"
    save_feature_sequence(seq, path)
    again = load_feature_sequence(path)
    assert again.graph_id == "graph/17"
    assert np.array_equal(again.vectors, seq.vectors)


def test_csv_export_shape(tmp_path):
    seq = FeatureSequence(graph_id="g", vectors=np.zeros((3, 4), dtype=np.float32))
    path = tmp_path / "g.csv"
    feature_sequence_to_csv(seq, path)
    lines = path.read_text().strip().split("\n")
    assert lines[0] == "snapshot,f0,f1,f2,f3"
    assert len(lines) == 4


def test_attack_sequences_sit_farther_than_benign_spread():
    # generator-backed probe: mean benign-to-attack cosine distance
    # between sequences exceeds the mean within-benign distance
    from provseq.synthetic import CorpusConfig, generate_synthetic_corpus

    graphs, manifest = generate_synthetic_corpus(
        CorpusConfig(benign_graphs=6, attack_graphs=3, edges_per_graph=800), seed=3)
    cfg = SketchConfig(radius=3, sketch_len=128, interval=200, seed=7)
    seqs = {g.graph_id: build_feature_sequence(g, cfg) for g in graphs}

    def mean_vec(s):
        return s.vectors.mean(axis=0)

    def cos_dist(a, b):
        return 1.0 - float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)))

    benign = [g.graph_id for g in graphs if manifest[g.graph_id] == "benign"]
    attack = [g.graph_id for g in graphs if manifest[g.graph_id] == "attack"]
    within = [cos_dist(mean_vec(seqs[a]), mean_vec(seqs[b]))
              for i, a in enumerate(benign) for b in benign[i + 1:]]
    across = [cos_dist(mean_vec(seqs[a]), mean_vec(seqs[b]))
              for a in benign for b in attack]
    assert np.mean(across) > np.mean(within)
