"""Seeded desk-scale corpus generator.

Benign graphs replay stereotyped system routines (file sessions, log
writes, network sessions, worker spawns, pipe hand-offs) drawn from a
shared vocabulary. Routine edges always point into fresh short-lived
nodes, so every node's in-edge history is one of a handful of fixed
lifecycles and the resulting neighbourhood digests repeat heavily both
within and across benign graphs - their label histograms overlap no
matter how the routines interleave.

Attack graphs replay the same benign behaviour plus a contiguous
intrusion motif - payload drop, implant execution, privilege
escalation, command-and-control beaconing, harvesting, exfiltration -
built from edge types that never occur benignly. The motif also feeds
edges *into* the victim process, permanently skewing its digest, so
everything the victim and the implant touch afterwards mints labels no
benign graph contains. Every attack graph contains the motif; no
benign graph does.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ingest import EdgeRecord, GraphStream

PROCESS = "process"
FILE = "file"
SOCKET = "socket"
PIPE = "pipe"

# (src is existing process "P"; other letters are fresh nodes per step)
ATTACK_MOTIF: tuple[tuple[str, str, str], ...] = (
    ("P", "drop_payload", "F"),
    ("F", "execute_payload", "Q"),
    ("Q", "escalate_priv", "P"),
    ("Q", "c2_connect", "S"),
    ("S", "c2_recv", "Q"),
    ("Q", "harvest_read", "G"),
    ("G", "staging_write", "Q"),
    ("Q", "exfil_send", "S"),
)

MOTIF_EDGE_TYPES: tuple[str, ...] = tuple(e for _, e, _ in ATTACK_MOTIF)


@dataclass(frozen=True)
class CorpusConfig:
    benign_graphs: int = 48
    attack_graphs: int = 12
    edges_per_graph: int = 5000
    edge_jitter: float = 0.10       # +- fraction of edges_per_graph
    motif_bursts: int = 3           # contiguous motif injections per attack graph
    motif_repeats: int = 4          # motif copies per burst


class _GraphBuilder:
    def __init__(self, graph_id: str, rng: np.random.Generator):
        self.graph_id = graph_id
        self.rng = rng
        self.edges: list[EdgeRecord] = []
        self._counter = 0
        self.node_types: dict[str, str] = {}
        root = self.new_node(PROCESS)
        self.processes = [root]

    def new_node(self, node_type: str) -> str:
        self._counter += 1
        node = f"n{self._counter}"
        self.node_types[node] = node_type
        return node

    def add(self, src: str, edge_type: str, dst: str) -> None:
        self.edges.append(EdgeRecord(
            src_id=src, src_type=self.node_types[src],
            dst_id=dst, dst_type=self.node_types[dst],
            edge_type=edge_type, graph_id=self.graph_id,
            seq=len(self.edges),
        ))

    def pick_process(self) -> str:
        # bias toward recently spawned processes, like live workloads do
        n = len(self.processes)
        idx = n - 1 - int(self.rng.integers(min(n, 6)))
        return self.processes[idx]


# Benign routines only ever add edges into freshly created nodes, whose
# in-edge histories are therefore fixed lifecycles shared by all graphs.

def _routine_file_session(b: _GraphBuilder) -> None:
    p = b.pick_process()
    f = b.new_node(FILE)
    b.add(p, "open", f)
    for _ in range(int(b.rng.integers(1, 4))):
        b.add(p, "read", f)
    b.add(p, "close", f)


def _routine_log_write(b: _GraphBuilder) -> None:
    p = b.pick_process()
    f = b.new_node(FILE)
    b.add(p, "open", f)
    for _ in range(int(b.rng.integers(1, 4))):
        b.add(p, "write", f)
    b.add(p, "close", f)


def _routine_net_session(b: _GraphBuilder) -> None:
    p = b.pick_process()
    s = b.new_node(SOCKET)
    b.add(p, "connect", s)
    for _ in range(int(b.rng.integers(1, 3))):
        b.add(p, "send", s)
        b.add(p, "recv", s)


def _routine_spawn(b: _GraphBuilder) -> None:
    p = b.pick_process()
    q = b.new_node(PROCESS)
    b.add(p, "fork", q)
    b.add(p, "exec", q)
    b.processes.append(q)
    if len(b.processes) > 24:
        b.processes.pop(0)


def _routine_pipe(b: _GraphBuilder) -> None:
    p = b.pick_process()
    q = b.pick_process()
    d = b.new_node(PIPE)
    b.add(p, "pipe_write", d)
    b.add(q, "pipe_read", d)


_ROUTINES = (
    (_routine_file_session, 0.30),
    (_routine_log_write, 0.25),
    (_routine_net_session, 0.20),
    (_routine_spawn, 0.15),
    (_routine_pipe, 0.10),
)


def _inject_motif(b: _GraphBuilder, repeats: int) -> None:
    for _ in range(repeats):
        victim = b.pick_process()
        mapping: dict[str, str] = {"P": victim}
        for src_sym, edge_type, dst_sym in ATTACK_MOTIF:
            for sym in (src_sym, dst_sym):
                if sym not in mapping:
                    node_type = PROCESS if sym == "Q" else (SOCKET if sym == "S" else FILE)
                    mapping[sym] = b.new_node(node_type)
            b.add(mapping[src_sym], edge_type, mapping[dst_sym])
        # the implant stays resident: its later routine activity keeps
        # minting labels no benign graph has
        b.processes.append(mapping["Q"])


def _build_graph(graph_id: str, label: str, target_edges: int,
                 cfg: CorpusConfig, rng: np.random.Generator) -> GraphStream:
    b = _GraphBuilder(graph_id, rng)
    names = [r for r, _ in _ROUTINES]
    weights = np.array([w for _, w in _ROUTINES])
    weights = weights / weights.sum()
    if label == "attack":
        burst_at = sorted(rng.uniform(0.1, 0.9, size=cfg.motif_bursts) * target_edges)
    else:
        burst_at = []
    next_burst = 0
    while len(b.edges) < target_edges:
        if next_burst < len(burst_at) and len(b.edges) >= burst_at[next_burst]:
            _inject_motif(b, cfg.motif_repeats)
            next_burst += 1
            continue
        routine = names[int(rng.choice(len(names), p=weights))]
        routine(b)
    while next_burst < len(burst_at):
        _inject_motif(b, cfg.motif_repeats)
        next_burst += 1
    return GraphStream(graph_id=graph_id, edges=tuple(b.edges), label=label)


def generate_synthetic_corpus(cfg: CorpusConfig, seed: int):
    """Deterministically build (graphs, manifest) for the given seed."""
    rng = np.random.default_rng(seed)
    graphs: list[GraphStream] = []
    manifest: dict[str, str] = {}
    specs = [(f"b{i:03d}", "benign") for i in range(cfg.benign_graphs)]
    specs += [(f"a{i:03d}", "attack") for i in range(cfg.attack_graphs)]
    for gid, label in specs:
        jitter = 1.0 + cfg.edge_jitter * float(rng.uniform(-1.0, 1.0))
        target = max(1, int(cfg.edges_per_graph * jitter))
        child = np.random.default_rng([seed, len(graphs)])
        graphs.append(_build_graph(gid, label, target, cfg, child))
        manifest[gid] = label
    return graphs, manifest


def contains_motif(stream: GraphStream) -> bool:
    """True when the motif's edge types appear as a contiguous run."""
    want = list(MOTIF_EDGE_TYPES)
    etypes = [e.edge_type for e in stream.edges]
    for i in range(len(etypes) - len(want) + 1):
        if etypes[i:i + len(want)] == want:
            return True
    return False
