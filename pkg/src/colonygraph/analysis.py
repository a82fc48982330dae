"""Outcome statistics over collective-state graphs and run tables."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .graph import CollectiveGraph, TrajectoryRecord

RELIABILITY_FRACTION = 0.1
QDIFF_BIN_WIDTH = 0.1
QDIFF_BINS = tuple((round(i * QDIFF_BIN_WIDTH, 10), round((i + 1) * QDIFF_BIN_WIDTH, 10)) for i in range(5))


class NodeLabel(str, enum.Enum):
    SUCCESS = "Success"
    FAILURE = "Failure"
    HUB = "Hub"
    INTERMEDIATE = "Intermediate"


@dataclass(frozen=True)
class NodeSuccess:
    successes: int
    visits: int
    reliable: bool

    @property
    def probability(self) -> float:
        return self.successes / self.visits


def success_probability(graph: CollectiveGraph,
                        trajectories: Sequence[TrajectoryRecord] | None = None,
                        reliability_fraction: float = RELIABILITY_FRACTION) -> dict[str, NodeSuccess]:
    """Per node: (#successful trajectories containing it) / (#trajectories containing it).

    A node counts at most once per trajectory. Timed-out trajectories count as
    unsuccessful. Nodes never visited are left out.
    """
    if trajectories is None:
        trajectories = graph.trajectories
    hits: dict[str, int] = {}
    wins: dict[str, int] = {}
    for tr in trajectories:
        ok = tr.success
        for k in set(tr.keys):
            hits[k] = hits.get(k, 0) + 1
            if ok:
                wins[k] = wins.get(k, 0) + 1
    total = len(trajectories)
    return {
        k: NodeSuccess(wins.get(k, 0), n, n >= reliability_fraction * total)
        for k, n in sorted(hits.items())
        if k in graph.nodes
    }


def label_nodes(graph: CollectiveGraph,
                trajectories: Sequence[TrajectoryRecord] | None = None) -> dict[str, NodeLabel]:
    """Success/Failure on terminal nodes of converged trials, Hub where no agent
    is site-oriented, Intermediate otherwise.

    A terminal node reached by both kinds of trial takes the majority label,
    ties going to Success.
    """
    if trajectories is None:
        trajectories = graph.trajectories
    votes: dict[str, int] = {}
    for tr in trajectories:
        if tr.converged and tr.keys:
            votes[tr.keys[-1]] = votes.get(tr.keys[-1], 0) + (1 if tr.success else -1)
    labels = {}
    for k, node in graph.nodes.items():
        if k in votes:
            labels[k] = NodeLabel.SUCCESS if votes[k] >= 0 else NodeLabel.FAILURE
        elif node.tensor.site_oriented_count() == 0:
            labels[k] = NodeLabel.HUB
        else:
            labels[k] = NodeLabel.INTERMEDIATE
    return labels


def apply_labels(graph: CollectiveGraph, labels: dict[str, NodeLabel]) -> None:
    for k, lab in labels.items():
        graph.nodes[k].label = NodeLabel(lab).value


def success_metric(chosen_quality: float, qualities: Sequence[float]) -> float:
    if not qualities:
        raise ValueError("no site qualities given")
    best = max(qualities)
    if best <= 0:
        raise ValueError("maximum quality must be positive")
    if not any(math.isclose(chosen_quality, q) for q in qualities):
        raise ValueError("chosen quality is not one of the site qualities")
    return chosen_quality / best


@dataclass(frozen=True)
class RunMetrics:
    chosen_site: int | None
    success: float | None
    ticks: int | None
    distance: float
    qualities: tuple[float, ...]
    max_ticks: int = 0
    num_agents: int = 0
    trial_id: str = ""

    def __post_init__(self):
        if (self.chosen_site is None) != (self.success is None):
            raise ValueError("success is present exactly when the run converged")

    @property
    def converged(self) -> bool:
        return self.chosen_site is not None

    @property
    def quality_difference(self) -> float:
        return max(self.qualities) - min(self.qualities)

    @classmethod
    def from_outcome(cls, outcome: int | None, ticks: int, distance: float,
                     qualities: Sequence[float], **kw) -> RunMetrics:
        qualities = tuple(qualities)
        if outcome is None:
            return cls(None, None, None, distance, qualities, **kw)
        return cls(outcome, success_metric(qualities[outcome], qualities), ticks,
                   distance, qualities, **kw)


def qdiff_bin(diff: float, width: float = QDIFF_BIN_WIDTH) -> tuple[float, float]:
    i = int(math.floor(diff / width + 1e-12))
    return (round(i * width, 10), round((i + 1) * width, 10))


def summarize(values: Iterable[float]) -> dict:
    """Mean and 25th/75th percentiles (linear interpolation)."""
    v = np.asarray(list(values), dtype=np.float64)
    if v.size == 0:
        raise ValueError("cannot summarize an empty group")
    q25, q75 = np.percentile(v, [25, 75])
    return {"n": int(v.size), "mean": float(v.mean()), "q25": float(q25), "q75": float(q75)}


def aggregate_metrics(runs: Sequence[RunMetrics], width: float = QDIFF_BIN_WIDTH) -> list[dict]:
    """Rows keyed by (metric, quality-difference bin, distance).

    Timed-out runs contribute to neither success nor time statistics.
    """
    groups: dict[tuple, list[RunMetrics]] = {}
    for r in runs:
        groups.setdefault((qdiff_bin(r.quality_difference, width), r.distance), []).append(r)
    rows = []
    for (b, dist) in sorted(groups):
        conv = [r for r in groups[(b, dist)] if r.converged]
        if not conv:
            continue
        for metric, vals in (("success", [r.success for r in conv]),
                             ("ticks", [r.ticks for r in conv])):
            rows.append({"metric": metric, "qdiff_lo": b[0], "qdiff_hi": b[1],
                         "distance": dist, **summarize(vals)})
    return rows
