"""Command-line pipeline: simulate -> graph -> train -> embed -> analyze -> export.

Every subcommand works on one campaign directory (``--out``), reads the files
written by earlier stages and refreshes ``manifest.json``.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import analysis, encoder
from .codec import FLOAT, ONEHOT
from .config import PRESETS, ConfigError, load_config
from .graph import (
    CollectiveGraph,
    add_trajectory,
    edge_probabilities,
    largest_weakly_connected_component,
    load_graph,
    merge,
    save_graph,
)
from .io import read_csv, read_json, read_manifest, read_trajectory, world_from_dict, write_csv, write_json, write_manifest
from .kmeans import kmeans
from .tsne import tsne_2d

log = logging.getLogger("colonygraph")


class PipelineError(RuntimeError):
    pass


def _stage_manifest(out: Path, stage: str, complete: bool = True) -> None:
    try:
        prev = read_manifest(out)
    except (OSError, ValueError):
        prev = {}
    stages = [s for s in prev.get("stages", []) if s != stage] + [stage]
    extra = {"stage": stage, "stages": stages}
    if "completed_cells" in prev:
        extra["completed_cells"] = prev["completed_cells"]
    write_manifest(out, complete=complete, extra=extra)


def _campaign(args):
    base = PRESETS[args.preset]
    c = load_config(args.config, base) if args.config else base
    if args.seed is not None:
        c = replace(c, base_seed=args.seed)
    if args.repetitions is not None:
        c = replace(c, repetitions=args.repetitions)
    return c


def cmd_simulate(args) -> None:
    from .campaign import run_campaign

    c = _campaign(args)
    run_campaign(c, args.out, workers=args.workers, write_graphs=False)
    build_graphs(Path(args.out))
    _stage_manifest(Path(args.out), "simulate")


def _trajectory_files(out: Path):
    cells_dir = out / "cells"
    if not cells_dir.is_dir():
        raise PipelineError(f"no trajectory logs under {cells_dir}; run `simulate` first")
    for cdir in sorted(p for p in cells_dir.iterdir() if p.is_dir()):
        world = world_from_dict(read_json(cdir / "world.json"))
        for path in sorted((cdir / "trajectories").glob("*.jsonl")):
            yield world, path


def build_graphs(out: Path) -> None:
    subs: list[CollectiveGraph] = []
    onehot: list[CollectiveGraph] = []
    gdir = out / "graphs"
    sdir = gdir / "subgraphs"
    sdir.mkdir(parents=True, exist_ok=True)
    for world, path in _trajectory_files(out):
        tr = read_trajectory(path)
        g = add_trajectory(CollectiveGraph(FLOAT), tr, world, trial_id=path.stem)
        save_graph(g, sdir / f"{path.stem}.json")
        subs.append(g)
        onehot.append(add_trajectory(CollectiveGraph(ONEHOT), tr, world, trial_id=path.stem))
    if not subs:
        raise PipelineError("no trajectory logs found")
    merged = merge(subs)
    analysis.apply_labels(merged, analysis.label_nodes(merged))
    save_graph(merged, gdir / "merged.json")
    save_graph(largest_weakly_connected_component(merged), gdir / "largest_component.json")
    save_graph(merge(onehot), gdir / "merged_onehot.json")
    probs = edge_probabilities(merged)
    write_csv([{"src": s, "dst": d, "count": merged.edges[(s, d)], "probability": repr(p)}
               for s in sorted(probs) for d, p in probs[s]],
              gdir / "edges.csv", ["src", "dst", "count", "probability"])


def cmd_graph(args) -> None:
    build_graphs(Path(args.out))
    _stage_manifest(Path(args.out), "graph")


def _load_subgraphs(out: Path, directory: str | None):
    sdir = Path(directory) if directory else out / "graphs" / "subgraphs"
    paths = sorted(sdir.glob("*.json")) if sdir.is_dir() else []
    graphs = [load_graph(p) for p in paths]
    graphs = [g for g in graphs if len(g) >= 2]
    if not graphs:
        raise PipelineError("no subgraph samples")
    return graphs


def cmd_train(args) -> None:
    out = Path(args.out)
    graphs = _load_subgraphs(out, args.subgraphs)
    samples = [encoder.Sample.from_graph(g) for g in graphs]
    train_s, val_s = encoder.split_samples(samples, args.validation_fraction, seed=args.seed or 0)
    if not train_s:
        raise PipelineError("no subgraph samples left for training")
    cfg = encoder.TrainConfig(learning_rate=args.lr, epochs=args.epochs,
                              validation_fraction=args.validation_fraction)
    model0 = encoder.EncoderModel.init(args.seed or 0)
    initial = encoder.mean_loss(model0, train_s)
    model, history = encoder.train(model0, train_s, cfg, seed=args.seed or 0)
    model.save(out / "model.json")
    write_csv([{"epoch": i + 1, "mean_loss": repr(v)} for i, v in enumerate(history)],
              out / "loss_history.csv", ["epoch", "mean_loss"])
    report = {"initial_loss": initial, "final_loss": history[-1],
              "train_samples": len(train_s), "validation_samples": len(val_s)}
    if val_s:
        pos, neg = [], []
        for s in val_s:
            p, n = encoder.link_scores(model, s)
            pos.extend(p)
            neg.extend(n)
        if pos and neg:
            report["validation_auc"] = encoder.roc_auc(pos, neg)
    write_json(report, out / "train_report.json")
    _stage_manifest(out, "train")


def cmd_embed(args) -> None:
    out = Path(args.out)
    model_path = out / "model.json"
    if not model_path.exists():
        raise PipelineError("no model.json; run `train` first")
    graph = load_graph(out / "graphs" / "merged.json")
    model = encoder.EncoderModel.load(model_path)
    emb = encoder.embed_graph(model, graph)
    labels = analysis.label_nodes(graph)
    write_csv([{"node": k, "e1": repr(float(v[0])), "e2": repr(float(v[1])), "e3": repr(float(v[2])),
                "label": labels[k].value, "visit_count": graph.nodes[k].visit_count}
               for k, v in emb.items()],
              out / "embeddings.csv", ["node", "e1", "e2", "e3", "label", "visit_count"])
    _stage_manifest(out, "embed")


def cmd_analyze(args) -> None:
    out = Path(args.out)
    graph = load_graph(out / "graphs" / "merged_onehot.json")
    stats = analysis.success_probability(graph)
    labels = analysis.label_nodes(graph)
    write_csv([{"node": k, "successes": s.successes, "visits": s.visits,
                "probability": repr(s.probability), "reliable": int(s.reliable),
                "label": labels[k].value}
               for k, s in stats.items()],
              out / "node_success.csv",
              ["node", "successes", "visits", "probability", "reliable", "label"])

    runs = _run_metrics(out)
    write_csv(analysis.aggregate_metrics(runs), out / "metrics_summary.csv",
              ["metric", "qdiff_lo", "qdiff_hi", "distance", "n", "mean", "q25", "q75"])

    # t-SNE on the most visited raw tensors, then k-means
    keys = sorted(graph.nodes, key=lambda k: (-graph.nodes[k].visit_count, k))[:args.max_points]
    keys.sort()
    rows = []
    if len(keys) >= 4:
        X = np.array([graph.nodes[k].tensor.values for k in keys])
        perplexity = min(args.perplexity, (len(keys) - 1) / 3 - 1e-9)
        Y = tsne_2d(X, perplexity=perplexity, iterations=args.iterations, seed=args.seed or 0)
        k = min(args.clusters, len(keys))
        cl, _ = kmeans(Y, k, seed=args.seed or 0)
        for i, key in enumerate(keys):
            s = stats.get(key)
            rows.append({"node": key, "x": repr(float(Y[i, 0])), "y": repr(float(Y[i, 1])),
                         "cluster": int(cl[i]),
                         "success_probability": "" if s is None else repr(s.probability),
                         "reliable": "" if s is None else int(s.reliable),
                         "visit_count": graph.nodes[key].visit_count})
    write_csv(rows, out / "clusters.csv",
              ["node", "x", "y", "cluster", "success_probability", "reliable", "visit_count"])
    _stage_manifest(out, "analyze")


def _run_metrics(out: Path):
    from .campaign import run_metrics_from_rows

    path = out / "metrics.csv"
    if not path.exists():
        raise PipelineError("no metrics.csv; run `simulate` first")
    return run_metrics_from_rows(read_csv(path))


def cmd_export(args) -> None:
    out = Path(args.out)
    edir = out / "export"
    edir.mkdir(exist_ok=True)
    summary = analysis.aggregate_metrics(_run_metrics(out))
    fields = ["qdiff_lo", "qdiff_hi", "distance", "n", "mean", "q25", "q75"]
    for metric, name in (("success", "success_vs_qdiff.csv"), ("ticks", "time_vs_qdiff.csv")):
        write_csv([{f: r[f] for f in fields} for r in summary if r["metric"] == metric],
                  edir / name, fields)
    if (out / "clusters.csv").exists():
        write_csv(read_csv(out / "clusters.csv"), edir / "clusters_2d.csv",
                  ["node", "x", "y", "cluster", "success_probability", "reliable", "visit_count"])
    if (out / "embeddings.csv").exists():
        write_csv(read_csv(out / "embeddings.csv"), edir / "embedding_3d.csv",
                  ["node", "e1", "e2", "e3", "label", "visit_count"])
    _stage_manifest(out, "export")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="campaign config file (Table II keys)")
    common.add_argument("--seed", type=int, help="base seed (u64)")
    common.add_argument("--workers", type=int, default=1)
    common.add_argument("--out", required=True, help="campaign directory")
    common.add_argument("--preset", choices=sorted(PRESETS), default="table2")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="colonygraph", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common], help="run a campaign")
    s.add_argument("--repetitions", type=int)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("graph", parents=[common], help="build collective-state graphs")
    s.set_defaults(func=cmd_graph)

    s = sub.add_parser("train", parents=[common], help="train the graph encoder")
    s.add_argument("--subgraphs", help="directory of subgraph JSON files")
    s.add_argument("--epochs", type=int, default=200)
    s.add_argument("--lr", type=float, default=1e-3)
    s.add_argument("--validation-fraction", type=float, default=0.2)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("embed", parents=[common], help="embed the merged graph")
    s.set_defaults(func=cmd_embed)

    s = sub.add_parser("analyze", parents=[common], help="success probabilities, labels, clusters")
    s.add_argument("--perplexity", type=float, default=15.0)
    s.add_argument("--iterations", type=int, default=1000)
    s.add_argument("--clusters", type=int, default=4)
    s.add_argument("--max-points", type=int, default=1000)
    s.set_defaults(func=cmd_analyze)

    s = sub.add_parser("export", parents=[common], help="write plot-ready CSV tables")
    s.set_defaults(func=cmd_export)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    args.out = str(args.out)
    Path(args.out).mkdir(parents=True, exist_ok=True)
    try:
        args.func(args)
    except (ConfigError, PipelineError, ValueError, OSError, KeyError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"colonygraph {args.command}: error: {msg}", file=sys.stderr)
        try:
            _stage_manifest(Path(args.out), args.command, complete=False)
        except OSError:
            pass
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
