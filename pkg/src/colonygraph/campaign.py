"""Experiment protocol: initial-condition pools, seeded trials and the campaign grid."""

from __future__ import annotations

import hashlib
import logging
import random
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

from .abm import (
    InitialCondition,
    TransitionParams,
    WorldConfig,
    check_quorum,
    make_initial_condition,
    place_sites,
    run_simulation,
    sample_qualities,
)
from .analysis import RunMetrics
from .codec import FLOAT, encode, tensor_key
from .config import Campaign, campaign_to_dict, format_config
from .graph import CollectiveGraph, add_trajectory, graph_from_dict, graph_to_dict, merge, save_graph
from .io import world_to_dict, write_csv, write_json, write_manifest, write_trajectory

log = logging.getLogger(__name__)

SEED_CONDITIONS = (
    InitialCondition.ALL_OBSERVE,
    InitialCondition.HALF_EXPLORE_HALF_OBSERVE,
    InitialCondition.NINETY_OBSERVE_TEN_RECRUIT_WORST,
)

METRIC_FIELDS = ["trial", "cell", "initial_condition", "repetition", "seed", "max_ticks",
                 "distance", "num_agents", "num_sites", "qualities", "qdiff", "max_quality",
                 "chosen_site", "success", "ticks"]


def mix_seed(*parts) -> int:
    """Stable 64-bit seed from arbitrary parts (independent of PYTHONHASHSEED)."""
    h = hashlib.blake2b("|".join(str(p) for p in parts).encode(), digest_size=8)
    return int.from_bytes(h.digest(), "little")


class PoolError(RuntimeError):
    pass


def build_initial_pool(world: WorldConfig, params: TransitionParams, seed: int,
                       size: int = 10, pool_ticks: int = 1000) -> list[tuple]:
    """One simulation per seed condition; ``size`` distinct non-quorum colony
    states drawn uniformly without replacement from everything they visited."""
    pool_world = replace(world, max_ticks=pool_ticks)
    rng = random.Random(seed)
    candidates: dict[str, tuple] = {}
    for i, kind in enumerate(SEED_CONDITIONS):
        colony = make_initial_condition(kind, pool_world, rng, params)
        tr = run_simulation(pool_world, params, colony, mix_seed(seed, "pool", i))
        for snap in tr.snapshots:
            if check_quorum(snap, pool_world) is not None:
                continue
            k = tensor_key(encode(snap, pool_world, FLOAT))
            candidates.setdefault(k, snap)
    if len(candidates) < size:
        raise PoolError(f"only {len(candidates)} distinct snapshots (need {size}); "
                        f"increase the pool runtime")
    keys = sorted(candidates)
    return [candidates[k] for k in rng.sample(keys, size)]


@dataclass(frozen=True)
class Cell:
    max_ticks: int
    distance: float
    num_agents: int
    num_sites: int
    quality_index: int
    qualities: tuple[float, ...]

    @property
    def id(self) -> str:
        return (f"T{self.max_ticks}_d{self.distance:g}_K{self.num_agents}"
                f"_N{self.num_sites}_q{self.quality_index}")


def quality_axis(c: Campaign, n_sites: int) -> list[tuple[float, ...]]:
    if c.fixed_qualities is not None:
        return [tuple(c.fixed_qualities)]
    rng = random.Random(mix_seed(c.base_seed, "qualities", n_sites))
    return [sample_qualities(n_sites, rng, c.max_quality_difference, c.min_quality)
            for _ in range(c.quality_vectors)]


def cells(c: Campaign) -> list[Cell]:
    out = []
    for n in c.site_counts:
        qaxis = quality_axis(c, n)
        for T in c.runtimes:
            for d in c.distances:
                for K in c.agent_counts:
                    for qi, qs in enumerate(qaxis):
                        out.append(Cell(T, float(d), K, n, qi, qs))
    return out


def cell_world(c: Campaign, cell: Cell) -> WorldConfig:
    rng = random.Random(mix_seed(c.base_seed, cell.id, "sites"))
    return WorldConfig(
        sites=place_sites(cell.qualities, cell.distance, rng),
        num_agents=cell.num_agents,
        max_distance=c.max_distance,
        quorum_fraction=c.quorum_fraction,
        quorum_count=c.quorum_count,
        max_ticks=cell.max_ticks,
        agent_speed=c.agent_speed,
        site_radius=c.site_radius,
        rng_seed=mix_seed(c.base_seed, cell.id),
    )


def initial_colonies(c: Campaign, cell: Cell, world: WorldConfig) -> list[tuple]:
    if c.initial_mode == "random_states":
        return []
    return build_initial_pool(world, c.params, mix_seed(c.base_seed, cell.id, "pool"),
                              c.pool_size, c.pool_ticks)


def trial_seed(c: Campaign, cell: Cell, ic: int, rep: int) -> int:
    return mix_seed(c.base_seed, cell.id, ic, rep)


def run_trial(c: Campaign, cell: Cell, world: WorldConfig, colony, ic: int, rep: int,
              record: bool = True):
    """Returns (trajectory, metrics row). Re-runnable in isolation."""
    seed = trial_seed(c, cell, ic, rep)
    if colony is None:
        colony = make_initial_condition(InitialCondition.RANDOM_STATES, world,
                                        random.Random(mix_seed(seed, "init")), c.params)
    tr = run_simulation(world, c.params, colony, seed, initial_condition_id=ic, record=record)
    rm = RunMetrics.from_outcome(tr.outcome, tr.ticks_elapsed, cell.distance, world.qualities)
    row = {
        "trial": f"{cell.id}_ic{ic}_r{rep}",
        "cell": cell.id,
        "initial_condition": ic,
        "repetition": rep,
        "seed": seed,
        "max_ticks": cell.max_ticks,
        "distance": repr(cell.distance),
        "num_agents": cell.num_agents,
        "num_sites": cell.num_sites,
        "qualities": " ".join(repr(q) for q in world.qualities),
        "qdiff": repr(rm.quality_difference),
        "max_quality": repr(max(world.qualities)),
        "chosen_site": "" if tr.outcome is None else tr.outcome,
        "success": "" if rm.success is None else repr(rm.success),
        "ticks": "" if rm.ticks is None else rm.ticks,
    }
    return tr, row


def _trial_job(args):
    c, cell, world, colony, ic, rep, traj_path = args
    tr, row = run_trial(c, cell, world, colony, ic, rep)
    write_trajectory(tr, world, traj_path)
    g = CollectiveGraph(FLOAT)
    add_trajectory(g, tr, world, trial_id=row["trial"])
    return row, graph_to_dict(g)


def run_campaign(c: Campaign, out_dir, workers: int = 1, write_graphs: bool = True) -> Path:
    """Run every cell and write the campaign directory.

    Layout::

        campaign.cfg, campaign.json, metrics.csv, manifest.json
        cells/<cell>/world.json
        cells/<cell>/trajectories/<trial>.jsonl
        graphs/merged.json, graphs/subgraphs/<trial>.json
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "campaign.cfg").write_text(format_config(c))
    write_json(campaign_to_dict(c), out / "campaign.json")
    rows: list[dict] = []
    subgraphs: list[CollectiveGraph] = []
    done: list[str] = []
    write_manifest(out, complete=False, extra={"stage": "simulate", "completed_cells": done})
    executor = ProcessPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        for cell in cells(c):
            world = cell_world(c, cell)
            cdir = out / "cells" / cell.id
            (cdir / "trajectories").mkdir(parents=True, exist_ok=True)
            write_json(world_to_dict(world), cdir / "world.json")
            pool = initial_colonies(c, cell, world)
            n_ic = len(pool) if pool else c.pool_size
            jobs = []
            for ic in range(n_ic):
                for rep in range(c.repetitions):
                    colony = pool[ic] if pool else None
                    path = cdir / "trajectories" / f"{cell.id}_ic{ic}_r{rep}.jsonl"
                    jobs.append((c, cell, world, colony, ic, rep, path))
            results = executor.map(_trial_job, jobs) if executor else map(_trial_job, jobs)
            for row, gdict in results:
                rows.append(row)
                subgraphs.append(graph_from_dict(gdict))
            done.append(cell.id)
            write_csv(rows, out / "metrics.csv", METRIC_FIELDS)
            write_manifest(out, complete=False, extra={"stage": "simulate", "completed_cells": done})
    except OSError:
        write_manifest(out, complete=False, extra={"stage": "simulate", "completed_cells": done,
                                                   "error": "I/O failure"})
        raise
    finally:
        if executor:
            executor.shutdown()
    if write_graphs:
        write_graph_files(subgraphs, out, [r["trial"] for r in rows])
    write_manifest(out, complete=True, extra={"stage": "simulate", "completed_cells": done})
    return out


def write_graph_files(subgraphs: Sequence[CollectiveGraph], out, trial_ids: Sequence[str]) -> None:
    gdir = Path(out) / "graphs"
    sdir = gdir / "subgraphs"
    sdir.mkdir(parents=True, exist_ok=True)
    for tid, g in zip(trial_ids, subgraphs):
        save_graph(g, sdir / f"{tid}.json")
    if subgraphs:
        save_graph(merge(subgraphs), gdir / "merged.json")


def run_metrics_from_rows(rows: Sequence[dict]) -> list[RunMetrics]:
    out = []
    for r in rows:
        qs = tuple(float(q) for q in r["qualities"].split())
        chosen = int(r["chosen_site"]) if r["chosen_site"] not in ("", None) else None
        ticks = int(r["ticks"]) if r["ticks"] not in ("", None) else 0
        out.append(RunMetrics.from_outcome(chosen, ticks, float(r["distance"]), qs,
                                           max_ticks=int(r["max_ticks"]),
                                           num_agents=int(r["num_agents"]),
                                           trial_id=r["trial"]))
    return out
