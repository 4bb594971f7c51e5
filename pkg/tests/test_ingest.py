import io
import string
import tracemalloc

import numpy as np
import pytest

from provseq.errors import MalformedLine, StrictModeViolation, UnsupportedFormat
from provseq.ingest import (
    EdgeRecord,
    GraphStream,
    load_manifest,
    parse_edge_line,
    parse_jsonl_edge,
    serialize_edge_line,
    serialize_jsonl_edge,
    stream_graphs,
    write_manifest,
    write_streamspot_tsv,
)


def test_parse_documented_record_layout():
    rec = parse_edge_line("7\ta\t5\tb\tX\t0")
    assert rec == EdgeRecord(src_id="7", src_type="a", dst_id="5", dst_type="b",
                             edge_type="X", graph_id="0", seq=0)


def test_parse_empty_line_is_malformed():
    with pytest.raises(MalformedLine):
        parse_edge_line("")


def test_parse_wrong_field_count_reports_line_number():
    with pytest.raises(MalformedLine) as exc:
        parse_edge_line("a\tb\tc", lineno=17)
    assert "line 17" in str(exc.value)


def test_parse_empty_id_is_malformed():
    with pytest.raises(MalformedLine):
        parse_edge_line("\ta\t5\tb\tX\t0")


def test_parse_trims_field_whitespace():
    rec = parse_edge_line(" 7 \ta\t5\tb\tX\t0\n")
    assert rec.src_id == "7"


_FIELD_CHARS = string.ascii_letters + string.digits + "_./:-"


def _random_field(rng) -> str:
    n = int(rng.integers(1, 12))
    return "".join(_FIELD_CHARS[i] for i in rng.integers(0, len(_FIELD_CHARS), size=n))


def test_round_trip_over_random_valid_lines():
    # property: serialize(parse(line)) reproduces the line byte for byte
    rng = np.random.default_rng(42)
    for _ in range(300):
        line = "\t".join(_random_field(rng) for _ in range(6))
        assert serialize_edge_line(parse_edge_line(line)) == line


def test_jsonl_round_trip_preserves_fields():
    rng = np.random.default_rng(43)
    for _ in range(100):
        rec = EdgeRecord(*(_random_field(rng) for _ in range(6)), seq=0)
        again = parse_jsonl_edge(serialize_jsonl_edge(rec))
        assert again == rec


def test_jsonl_missing_key_is_malformed():
    with pytest.raises(MalformedLine) as exc:
        parse_jsonl_edge('{"src": "1", "dst": "2"}')
    assert "missing keys" in str(exc.value)


def test_jsonl_bad_json_is_malformed():
    with pytest.raises(MalformedLine):
        parse_jsonl_edge("{nope")


def test_stream_groups_interleaved_graph_ids():
    text = "1\ta\t2\tb\tX\t0\n9\tc\t8\td\tY\t1\n3\ta\t4\tb\tZ\t0\n7\tc\t6\td\tW\t1\n"
    graphs = list(stream_graphs(io.StringIO(text)))
    assert [g.graph_id for g in graphs] == ["0", "1"]
    assert all(len(g.edges) == 2 for g in graphs)
    assert [e.seq for e in graphs[0].edges] == [0, 1]
    assert [e.seq for e in graphs[1].edges] == [0, 1]


def test_stream_empty_file_yields_nothing():
    assert list(stream_graphs(io.StringIO(""))) == []


def test_stream_counting_oracle_and_seq_gaps(tmp_path):
    # oracle: line count equals the sum of per-graph edge counts, and
    # per-graph seq runs 0..k-1 with no gaps
    rng = np.random.default_rng(7)
    gids = ["0", "1", "2"]
    lines = []
    per_gid = {g: 0 for g in gids}
    for i in range(10_000):
        g = gids[int(rng.integers(3))]
        per_gid[g] += 1
        lines.append(f"s{i}\tproc\td{i}\tfile\tread\t{g}")
    path = tmp_path / "edges.tsv"
    path.write_text("\n".join(lines) + "\n")
    graphs = {g.graph_id: g for g in stream_graphs(path)}
    assert sum(len(g.edges) for g in graphs.values()) == 10_000
    for gid in gids:
        assert len(graphs[gid].edges) == per_gid[gid]
        assert [e.seq for e in graphs[gid].edges] == list(range(per_gid[gid]))


def test_stream_preserves_arrival_order():
    text = "".join(f"s{i}\tp\td{i}\tf\te{i}\tg\n" for i in range(50))
    (graph,) = stream_graphs(io.StringIO(text))
    assert [e.edge_type for e in graph.edges] == [f"e{i}" for i in range(50)]


def test_strict_mode_raises_on_malformed_line():
    text = "1\ta\t2\tb\tX\t0\nbroken line\n"
    with pytest.raises(StrictModeViolation):
        list(stream_graphs(io.StringIO(text)))


def test_lenient_mode_skips_malformed_lines():
    text = "1\ta\t2\tb\tX\t0\nbroken line\n3\ta\t4\tb\tY\t0\n"
    (graph,) = stream_graphs(io.StringIO(text), strict=False)
    assert len(graph.edges) == 2
    assert [e.seq for e in graph.edges] == [0, 1]


def test_unsupported_format_rejected():
    with pytest.raises(UnsupportedFormat):
        list(stream_graphs(io.StringIO(""), format="xml"))


def test_jsonl_format_grouping():
    text = (
        '{"src":"1","src_type":"p","dst":"2","dst_type":"f","etype":"read","gid":"g1"}\n'
        '{"src":"3","src_type":"p","dst":"4","dst_type":"f","etype":"write","gid":"g1"}\n'
    )
    (graph,) = stream_graphs(io.StringIO(text), format="jsonl_edges")
    assert graph.graph_id == "g1"
    assert [e.edge_type for e in graph.edges] == ["read", "write"]


def test_labels_attach_from_manifest():
    text = "1\ta\t2\tb\tX\tg1\n"
    (graph,) = stream_graphs(io.StringIO(text), labels={"g1": "attack"})
    assert graph.label == "attack"


def test_assume_grouped_streams_one_graph_at_a_time():
    text = "1\ta\t2\tb\tX\tg1\n3\ta\t4\tb\tY\tg2\n"
    it = stream_graphs(io.StringIO(text), assume_grouped=True)
    first = next(it)
    assert first.graph_id == "g1"
    assert next(it).graph_id == "g2"


def test_assume_grouped_rejects_reappearing_graph():
    text = "1\ta\t2\tb\tX\tg1\n3\ta\t4\tb\tY\tg2\n5\ta\t6\tb\tZ\tg1\n"
    with pytest.raises(MalformedLine):
        list(stream_graphs(io.StringIO(text), assume_grouped=True))


def test_grouped_streaming_memory_stays_bounded(tmp_path):
    # contiguous-per-graph file consumed sequentially: peak memory must
    # track one graph's buffer, not the whole file
    path = tmp_path / "big.tsv"
    with open(path, "w") as fh:
        for g in range(40):
            for i in range(2500):
                fh.write(f"s{i}\tproc\td{i}\tfile\tread\tg{g:02d}\n")
    tracemalloc.start()
    count = 0
    for graph in stream_graphs(path, assume_grouped=True):
        count += len(graph.edges)
    _, peak = tracemalloc.get_traced_memory()
    tracemalloc.stop()
    assert count == 100_000
    # one graph is 2500 edges; allow generous slack for interpreter noise
    # but stay far below the ~100k-edge total footprint
    per_edge = 400  # rough bytes per buffered EdgeRecord
    assert peak < 12 * 2500 * per_edge


def test_manifest_round_trip(tmp_path):
    manifest = {"g1": "benign", "g2": "attack"}
    path = tmp_path / "manifest.csv"
    write_manifest(manifest, path)
    assert load_manifest(path) == manifest


def test_manifest_rejects_bad_label(tmp_path):
    path = tmp_path / "manifest.csv"
    path.write_text("g1,weird\n")
    with pytest.raises(MalformedLine):
        load_manifest(path)


def test_tsv_writer_round_trip(tmp_path):
    stream = GraphStream(graph_id="g", edges=(
        EdgeRecord("1", "p", "2", "f", "read", "g", 0),
        EdgeRecord("3", "p", "4", "f", "write", "g", 1),
    ))
    path = tmp_path / "out.tsv"
    write_streamspot_tsv([stream], path)
    (again,) = stream_graphs(path)
    assert again.edges == stream.edges
