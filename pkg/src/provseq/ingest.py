"""Parsers for pre-recorded provenance edge streams.

Two replayable on-disk formats are supported:

* ``streamspot_tsv`` -- six tab-separated fields per line, newline
  terminated::

      src_id <TAB> src_type <TAB> dst_id <TAB> dst_type <TAB> edge_type <TAB> graph_id

* ``jsonl_edges`` -- one JSON object per line with keys
  ``src, src_type, dst, dst_type, etype, gid``.

Ground-truth labels come from a sidecar manifest, a CSV of
``graph_id,label`` rows with label in {benign, attack}; they never
influence parsing or downstream sketching.

Node identity is scoped to the owning graph: ids may repeat across
graph_ids. Cycles are accepted; only arrival order matters downstream.
"""

from __future__ import annotations

import io
import json
import logging
from collections.abc import Iterable, Iterator, Mapping
from dataclasses import dataclass, replace
from pathlib import Path

from .errors import MalformedLine, StrictModeViolation, UnsupportedFormat, DataError

log = logging.getLogger(__name__)

STREAMSPOT_TSV = "streamspot_tsv"
JSONL_EDGES = "jsonl_edges"
FORMATS = (STREAMSPOT_TSV, JSONL_EDGES)

VALID_LABELS = ("benign", "attack")

_JSONL_KEYS = ("src", "src_type", "dst", "dst_type", "etype", "gid")


@dataclass(frozen=True)
class EdgeRecord:
    """One timestamped, typed provenance edge.

    ``seq`` is the monotone arrival index within the owning graph; it is
    assigned by the reader, not stored in the file.
    """

    src_id: str
    src_type: str
    dst_id: str
    dst_type: str
    edge_type: str
    graph_id: str
    seq: int = 0


@dataclass(frozen=True)
class GraphStream:
    """The ordered edge stream of one execution graph.

    ``label`` is the ground-truth benign/attack flag used only by the
    evaluation stage; ``None`` when no manifest was supplied.
    """

    graph_id: str
    edges: tuple[EdgeRecord, ...]
    label: str | None = None


def parse_edge_line(line: str, seq: int = 0, lineno: int | None = None) -> EdgeRecord:
    """Parse one tab-separated record into an :class:`EdgeRecord`.

    Fields are whitespace-trimmed. The arrival index ``seq`` is supplied
    by the caller's running counter. Raises :class:`MalformedLine` on a
    wrong field count or an empty id.
    """
    stripped = line.rstrip("\r\n")
    if not stripped.strip():
        raise MalformedLine("empty line", lineno)
    fields = [f.strip() for f in stripped.split("\t")]
    if len(fields) != 6:
        raise MalformedLine(f"expected 6 tab-separated fields, got {len(fields)}", lineno)
    src_id, src_type, dst_id, dst_type, edge_type, graph_id = fields
    for name, value in (("src_id", src_id), ("dst_id", dst_id), ("graph_id", graph_id)):
        if not value:
            raise MalformedLine(f"empty {name}", lineno)
    return EdgeRecord(src_id, src_type, dst_id, dst_type, edge_type, graph_id, seq)


def serialize_edge_line(edge: EdgeRecord) -> str:
    """Inverse of :func:`parse_edge_line`; no trailing newline."""
    return "\t".join(
        (edge.src_id, edge.src_type, edge.dst_id, edge.dst_type, edge.edge_type, edge.graph_id)
    )


def parse_jsonl_edge(line: str, seq: int = 0, lineno: int | None = None) -> EdgeRecord:
    """Parse one JSON-lines edge object into an :class:`EdgeRecord`."""
    stripped = line.strip()
    if not stripped:
        raise MalformedLine("empty line", lineno)
    try:
        obj = json.loads(stripped)
    except json.JSONDecodeError as exc:
        raise MalformedLine(f"invalid JSON: {exc.msg}", lineno) from exc
    if not isinstance(obj, dict):
        raise MalformedLine("expected a JSON object", lineno)
    missing = [k for k in _JSONL_KEYS if k not in obj]
    if missing:
        raise MalformedLine(f"missing keys: {', '.join(missing)}", lineno)
    values = [str(obj[k]).strip() for k in _JSONL_KEYS]
    src_id, src_type, dst_id, dst_type, edge_type, graph_id = values
    for name, value in (("src", src_id), ("dst", dst_id), ("gid", graph_id)):
        if not value:
            raise MalformedLine(f"empty {name}", lineno)
    return EdgeRecord(src_id, src_type, dst_id, dst_type, edge_type, graph_id, seq)


def serialize_jsonl_edge(edge: EdgeRecord) -> str:
    obj = {
        "src": edge.src_id,
        "src_type": edge.src_type,
        "dst": edge.dst_id,
        "dst_type": edge.dst_type,
        "etype": edge.edge_type,
        "gid": edge.graph_id,
    }
    return json.dumps(obj, separators=(",", ":"))


def _open_lines(source) -> Iterator[str]:
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8") as fh:
            yield from fh
        return
    if isinstance(source, (bytes, bytearray)):
        yield from io.StringIO(source.decode("utf-8"))
        return
    if hasattr(source, "read"):
        first = source.read(0)
        if isinstance(first, bytes):
            yield from io.TextIOWrapper(source, encoding="utf-8")
        else:
            yield from source
        return
    yield from source  # any iterable of lines


def stream_graphs(
    source,
    format: str = STREAMSPOT_TSV,
    strict: bool = True,
    labels: Mapping[str, str] | None = None,
    assume_grouped: bool = False,
) -> Iterator[GraphStream]:
    """Group an edge stream into per-graph :class:`GraphStream` values.

    Edges are grouped by graph_id with per-graph arrival order preserved
    and ``seq`` assigned 0,1,2,... per graph. Graphs are yielded in order
    of first appearance.

    With ``assume_grouped=True`` the caller asserts that each graph's
    edges are contiguous in the file; a graph is then emitted as soon as
    its run ends, so memory stays bounded by a single graph's buffer. A
    graph_id that reappears after its run closed raises
    :class:`MalformedLine` in this mode. The default mode groups exactly
    (interleaved ids are fine) at the cost of buffering until the end of
    the stream.

    Malformed lines raise :class:`StrictModeViolation` when ``strict``,
    otherwise they are logged and skipped.
    """
    if format == STREAMSPOT_TSV:
        parse = parse_edge_line
    elif format == JSONL_EDGES:
        parse = parse_jsonl_edge
    else:
        raise UnsupportedFormat(f"unknown format {format!r}; expected one of {FORMATS}")

    buffers: dict[str, list[EdgeRecord]] = {}
    closed: set[str] = set()
    current_gid: str | None = None
    skipped = 0

    def finish(gid: str) -> GraphStream:
        edges = buffers.pop(gid)
        label = labels.get(gid) if labels is not None else None
        return GraphStream(graph_id=gid, edges=tuple(edges), label=label)

    for lineno, raw in enumerate(_open_lines(source), start=1):
        if not raw.strip():
            continue
        try:
            edge = parse(raw, lineno=lineno)
        except MalformedLine as exc:
            if strict:
                raise StrictModeViolation(exc) from exc
            skipped += 1
            log.warning("skipping malformed line: %s", exc)
            continue
        gid = edge.graph_id
        if assume_grouped and gid != current_gid:
            if gid in closed:
                raise MalformedLine(
                    f"graph_id {gid!r} reappeared after its contiguous run ended", lineno
                )
            if current_gid is not None:
                closed.add(current_gid)
                yield finish(current_gid)
            current_gid = gid
        bucket = buffers.setdefault(gid, [])
        bucket.append(replace(edge, seq=len(bucket)))

    if skipped:
        log.info("skipped %d malformed lines", skipped)
    if assume_grouped:
        if current_gid is not None:
            yield finish(current_gid)
    else:
        for gid in list(buffers):
            yield finish(gid)


def load_manifest(path) -> dict[str, str]:
    """Read a ``graph_id,label`` CSV into a dict.

    A leading ``graph_id,label`` header row is tolerated. Labels must be
    ``benign`` or ``attack``.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"manifest not found: {path}")
    manifest: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if lineno == 1 and line.lower().replace(" ", "") == "graph_id,label":
                continue
            parts = [p.strip() for p in line.split(",")]
            if len(parts) != 2:
                raise MalformedLine(f"expected 'graph_id,label', got {line!r}", lineno)
            gid, label = parts
            if label not in VALID_LABELS:
                raise MalformedLine(f"label must be one of {VALID_LABELS}, got {label!r}", lineno)
            manifest[gid] = label
    return manifest


def write_manifest(manifest: Mapping[str, str], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("graph_id,label\n")
        for gid in manifest:
            fh.write(f"{gid},{manifest[gid]}\n")


def write_streamspot_tsv(streams: Iterable[GraphStream], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for stream in streams:
            for edge in stream.edges:
                fh.write(serialize_edge_line(edge))
                fh.write("\n")


def write_jsonl_edges(streams: Iterable[GraphStream], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for stream in streams:
            for edge in stream.edges:
                fh.write(serialize_jsonl_edge(edge))
                fh.write("\n")
