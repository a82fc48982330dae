"""Collective-state graphs built from simulation trajectories."""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .abm import Trajectory, WorldConfig
from .codec import FLOAT, MAX_AGENTS, StateTensor, encode, tensor_from_values, tensor_key

GRAPH_FORMAT_VERSION = 1
DENSE_LIMIT = 5000


@dataclass
class Node:
    tensor: StateTensor
    visit_count: int = 0
    label: str | None = None


@dataclass(frozen=True)
class TrajectoryRecord:
    """Node-key path of one trial plus what it needs for outcome analysis."""

    keys: tuple[str, ...]
    outcome: int | None
    qualities: tuple[float, ...]
    ticks: int = 0
    trial_id: str = ""

    @property
    def converged(self) -> bool:
        return self.outcome is not None

    @property
    def chosen_quality(self) -> float | None:
        return None if self.outcome is None else self.qualities[self.outcome]

    @property
    def success(self) -> bool:
        """True when the colony settled on a site of maximal quality."""
        return self.outcome is not None and self.qualities[self.outcome] == max(self.qualities)


@dataclass
class CollectiveGraph:
    encoding: str = FLOAT
    nodes: dict[str, Node] = field(default_factory=dict)
    edges: dict[tuple[str, str], int] = field(default_factory=dict)
    trajectories: list[TrajectoryRecord] = field(default_factory=list)

    def __len__(self):
        return len(self.nodes)

    def ordering(self) -> list[str]:
        return sorted(self.nodes)

    def successors(self, key: str) -> list[str]:
        return sorted(d for (s, d) in self.edges if s == key)

    def copy(self) -> CollectiveGraph:
        return CollectiveGraph(
            self.encoding,
            {k: Node(n.tensor, n.visit_count, n.label) for k, n in self.nodes.items()},
            dict(self.edges),
            list(self.trajectories),
        )

    def same_structure(self, other: CollectiveGraph) -> bool:
        """Node/edge/count equality (trajectory registry order is ignored)."""
        return (
            {k: n.visit_count for k, n in self.nodes.items()}
            == {k: n.visit_count for k, n in other.nodes.items()}
            and self.edges == other.edges
        )


def trajectory_keys(trajectory: Trajectory, world: WorldConfig, encoding: str = FLOAT,
                    max_agents: int = MAX_AGENTS) -> list[tuple[str, StateTensor]]:
    """Encoded path with consecutive duplicates collapsed."""
    path: list[tuple[str, StateTensor]] = []
    for snap in trajectory.snapshots:
        t = encode(snap, world, encoding, max_agents)
        k = tensor_key(t)
        if not path or path[-1][0] != k:
            path.append((k, t))
    return path


def add_path(graph: CollectiveGraph, path: Sequence[tuple[str, StateTensor]],
             record: TrajectoryRecord | None = None) -> CollectiveGraph:
    prev = None
    for k, t in path:
        node = graph.nodes.get(k)
        if node is None:
            node = graph.nodes[k] = Node(t)
        node.visit_count += 1
        if prev is not None and prev != k:
            graph.edges[(prev, k)] = graph.edges.get((prev, k), 0) + 1
        prev = k
    if record is not None:
        graph.trajectories.append(record)
    return graph


def add_trajectory(graph: CollectiveGraph, trajectory: Trajectory, world: WorldConfig,
                   max_agents: int = MAX_AGENTS, trial_id: str = "") -> CollectiveGraph:
    path = trajectory_keys(trajectory, world, graph.encoding, max_agents)
    rec = TrajectoryRecord(tuple(k for k, _ in path), trajectory.outcome,
                           tuple(world.qualities), trajectory.ticks_elapsed, trial_id)
    return add_path(graph, path, rec)


def subgraph_sample(trajectories: Sequence[Trajectory], world: WorldConfig,
                    encoding: str = FLOAT, max_agents: int = MAX_AGENTS) -> CollectiveGraph:
    """Graph of a single simulation (one trajectory, or its pieces in order)."""
    if not trajectories:
        raise ValueError("a subgraph sample needs at least one trajectory")
    g = CollectiveGraph(encoding)
    for tr in trajectories:
        if not tr.snapshots:
            raise ValueError("trajectory has no snapshots")
        add_trajectory(g, tr, world, max_agents)
    return g


def merge(graphs: Iterable[CollectiveGraph]) -> CollectiveGraph:
    """Deterministic fold; callers order ``graphs`` by simulation id."""
    out: CollectiveGraph | None = None
    for g in graphs:
        if out is None:
            out = CollectiveGraph(g.encoding)
        elif g.encoding != out.encoding:
            raise ValueError("cannot merge graphs with different encodings")
        for k, n in g.nodes.items():
            mine = out.nodes.get(k)
            if mine is None:
                out.nodes[k] = Node(n.tensor, n.visit_count, n.label)
            else:
                mine.visit_count += n.visit_count
        for e, c in g.edges.items():
            out.edges[e] = out.edges.get(e, 0) + c
        out.trajectories.extend(g.trajectories)
    if out is None:
        raise ValueError("nothing to merge")
    return out


def weakly_connected_components(graph: CollectiveGraph) -> list[set[str]]:
    nbrs: dict[str, set[str]] = {k: set() for k in graph.nodes}
    for s, d in graph.edges:
        nbrs[s].add(d)
        nbrs[d].add(s)
    seen: set[str] = set()
    comps = []
    for start in sorted(nbrs):
        if start in seen:
            continue
        comp = {start}
        queue = deque([start])
        seen.add(start)
        while queue:
            u = queue.popleft()
            for v in nbrs[u]:
                if v not in seen:
                    seen.add(v)
                    comp.add(v)
                    queue.append(v)
        comps.append(comp)
    return comps


def induced_subgraph(graph: CollectiveGraph, keep: set[str]) -> CollectiveGraph:
    g = CollectiveGraph(graph.encoding)
    for k in sorted(keep):
        n = graph.nodes[k]
        g.nodes[k] = Node(n.tensor, n.visit_count, n.label)
    g.edges = {e: c for e, c in graph.edges.items() if e[0] in keep and e[1] in keep}
    g.trajectories = [t for t in graph.trajectories if t.keys and t.keys[0] in keep]
    return g


def largest_weakly_connected_component(graph: CollectiveGraph) -> CollectiveGraph:
    if not graph.nodes:
        raise ValueError("graph is empty")
    comps = weakly_connected_components(graph)
    # max size, ties to the component holding the smallest key
    best = min(comps, key=lambda c: (-len(c), min(c)))
    return induced_subgraph(graph, best)


def edge_probabilities(graph: CollectiveGraph) -> dict[str, list[tuple[str, float]]]:
    totals: dict[str, int] = {}
    for (s, _), c in graph.edges.items():
        totals[s] = totals.get(s, 0) + c
    out: dict[str, list[tuple[str, float]]] = {k: [] for k in graph.nodes}
    for (s, d), c in sorted(graph.edges.items()):
        out[s].append((d, c / totals[s]))
    return out


def adjacency_matrix(graph: CollectiveGraph, ordering: Sequence[str] | None = None) -> np.ndarray:
    """Symmetric 0/1 adjacency (edge in either direction), zero diagonal."""
    if ordering is None:
        ordering = graph.ordering()
    if len(set(ordering)) != len(ordering) or set(ordering) != set(graph.nodes):
        unknown = [k for k in ordering if k not in graph.nodes]
        if unknown:
            raise KeyError(f"unknown node in ordering: {unknown[0]}")
        raise ValueError("ordering must cover every node exactly once")
    n = len(ordering)
    if n > DENSE_LIMIT:
        raise ValueError(f"dense adjacency limited to {DENSE_LIMIT} nodes; use edge_pairs()")
    index = {k: i for i, k in enumerate(ordering)}
    adj = np.zeros((n, n))
    for s, d in graph.edges:
        i, j = index[s], index[d]
        if i != j:
            adj[i, j] = adj[j, i] = 1.0
    return adj


def edge_pairs(graph: CollectiveGraph, ordering: Sequence[str] | None = None):
    """Undirected index pairs (i < j), for graphs too large for a dense matrix."""
    if ordering is None:
        ordering = graph.ordering()
    index = {k: i for i, k in enumerate(ordering)}
    pairs = {tuple(sorted((index[s], index[d]))) for s, d in graph.edges if s != d}
    return sorted(pairs)


def feature_matrix(graph: CollectiveGraph, ordering: Sequence[str] | None = None) -> np.ndarray:
    if ordering is None:
        ordering = graph.ordering()
    return np.array([graph.nodes[k].tensor.values for k in ordering], dtype=np.float64)


# --- serialization -------------------------------------------------------

def graph_to_dict(graph: CollectiveGraph) -> dict:
    return {
        "format": "collective-graph",
        "version": GRAPH_FORMAT_VERSION,
        "encoding": graph.encoding,
        "nodes": [
            {"key": k, "tensor": list(graph.nodes[k].tensor.values),
             "visit_count": graph.nodes[k].visit_count, "label": graph.nodes[k].label}
            for k in graph.ordering()
        ],
        "edges": [{"src": s, "dst": d, "count": c} for (s, d), c in sorted(graph.edges.items())],
        "trajectories": [
            {"trial": t.trial_id, "keys": list(t.keys), "outcome": t.outcome,
             "qualities": list(t.qualities), "ticks": t.ticks}
            for t in graph.trajectories
        ],
    }


def graph_from_dict(data: dict) -> CollectiveGraph:
    if data.get("format") != "collective-graph":
        raise ValueError("not a collective-graph document")
    if data.get("version") != GRAPH_FORMAT_VERSION:
        raise ValueError(f"unsupported graph format version {data.get('version')}")
    enc = data["encoding"]
    g = CollectiveGraph(enc)
    for n in data["nodes"]:
        g.nodes[n["key"]] = Node(tensor_from_values(n["tensor"], enc), n["visit_count"], n.get("label"))
    for e in data["edges"]:
        if e["src"] not in g.nodes or e["dst"] not in g.nodes:
            raise ValueError("edge endpoint missing from node table")
        g.edges[(e["src"], e["dst"])] = e["count"]
    for t in data.get("trajectories", []):
        g.trajectories.append(TrajectoryRecord(tuple(t["keys"]), t["outcome"],
                                               tuple(t["qualities"]), t.get("ticks", 0),
                                               t.get("trial", "")))
    return g


def save_graph(graph: CollectiveGraph, path) -> None:
    with open(path, "w") as fh:
        json.dump(graph_to_dict(graph), fh, separators=(",", ":"))


def load_graph(path) -> CollectiveGraph:
    with open(path) as fh:
        return graph_from_dict(json.load(fh))
