"""File formats: trajectory logs, worlds, CSV tables and the run manifest."""

from __future__ import annotations

import csv
import hashlib
import json
import os
from pathlib import Path
from typing import Iterable, Sequence

from .abm import Agent, AgentState, Site, Trajectory, WorldConfig, check_quorum

MANIFEST_NAME = "manifest.json"
MANIFEST_VERSION = 1


def agent_to_dict(a: Agent) -> dict:
    return {"id": a.id, "state": a.state.value, "x": a.position[0], "y": a.position[1],
            "site": a.favored_site, "reassess": a.reassess_remaining}


def agent_from_dict(d: dict) -> Agent:
    return Agent(d["id"], AgentState(d["state"]), (float(d["x"]), float(d["y"])),
                 favored_site=d["site"], reassess_remaining=d["reassess"])


def trajectory_lines(trajectory: Trajectory, world: WorldConfig) -> Iterable[str]:
    last = len(trajectory.snapshots) - 1
    for tick, snap in enumerate(trajectory.snapshots):
        quorum = trajectory.outcome if tick == last else check_quorum(snap, world)
        yield json.dumps({"tick": tick, "agents": [agent_to_dict(a) for a in snap],
                          "quorum": quorum}, separators=(",", ":"))


def write_trajectory(trajectory: Trajectory, world: WorldConfig, path) -> None:
    with open(path, "w") as fh:
        for line in trajectory_lines(trajectory, world):
            fh.write(line)
            fh.write("\n")


def read_trajectory(path, initial_condition_id: int = 0) -> Trajectory:
    snaps = []
    quorum = None
    with open(path) as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            snaps.append(tuple(agent_from_dict(a) for a in rec["agents"]))
            quorum = rec["quorum"]
    if not snaps:
        raise ValueError(f"{path}: empty trajectory log")
    return Trajectory(initial_condition_id, snaps, quorum, len(snaps) - 1)


def world_to_dict(world: WorldConfig) -> dict:
    return {
        "version": 1,
        "sites": [{"id": s.id, "x": s.position[0], "y": s.position[1], "quality": s.quality}
                  for s in world.sites],
        "num_agents": world.num_agents,
        "max_distance": world.max_distance,
        "quorum_fraction": world.quorum_fraction,
        "quorum_count": world.quorum_count,
        "max_ticks": world.max_ticks,
        "agent_speed": world.agent_speed,
        "site_radius": world.site_radius,
        "rng_seed": world.rng_seed,
    }


def world_from_dict(d: dict) -> WorldConfig:
    sites = tuple(Site(s["id"], (s["x"], s["y"]), s["quality"]) for s in d["sites"])
    return WorldConfig(sites=sites, num_agents=d["num_agents"], max_distance=d["max_distance"],
                       quorum_fraction=d["quorum_fraction"], quorum_count=d.get("quorum_count"),
                       max_ticks=d["max_ticks"], agent_speed=d["agent_speed"],
                       site_radius=d["site_radius"], rng_seed=d.get("rng_seed", 0))


def write_json(obj, path) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True)
        fh.write("\n")


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


def write_csv(rows: Sequence[dict], path, fieldnames: Sequence[str] | None = None) -> None:
    if fieldnames is None:
        fieldnames = list(rows[0]) if rows else []
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fieldnames, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow(r)


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(root, complete: bool, extra: dict | None = None) -> dict:
    """Hash every file under ``root`` (except the manifest) into manifest.json."""
    root = Path(root)
    files = []
    for p in sorted(root.rglob("*")):
        if p.is_file() and p.name != MANIFEST_NAME:
            files.append({"path": p.relative_to(root).as_posix(), "sha256": file_sha256(p),
                          "bytes": p.stat().st_size})
    manifest = {"version": MANIFEST_VERSION, "complete": complete, "files": files}
    if extra:
        manifest.update(extra)
    tmp = root / (MANIFEST_NAME + ".tmp")
    write_json(manifest, tmp)
    os.replace(tmp, root / MANIFEST_NAME)
    return manifest


def read_manifest(root) -> dict:
    return read_json(Path(root) / MANIFEST_NAME)
