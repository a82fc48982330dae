import subprocess
import sys

import pytest

from colonygraph.cli import main
from colonygraph.io import file_sha256, read_csv, read_json, read_manifest
from colonygraph.graph import load_graph

TINY_CFG = """[campaign]
simulation_run_times_T = 1000
distance_of_sites = 100
number_of_agents = 5
number_of_sites = 2
quality_vectors = 1
initial_conditions = 3
repetitions = 2
"""


@pytest.fixture(scope="module")
def campaign_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "tiny.cfg"
    cfg.write_text(TINY_CFG)
    out = root / "run"
    assert main(["simulate", "--config", str(cfg), "--seed", "5", "--out", str(out)]) == 0
    return out


def _hashes(root, pattern):
    return {p: file_sha256(p) for p in sorted(root.glob(pattern))}


def test_full_pipeline(campaign_dir):
    out = campaign_dir
    before = _hashes(out, "cells/**/*.jsonl")
    before.update(_hashes(out, "metrics.csv"))
    assert main(["graph", "--out", str(out)]) == 0
    g = load_graph(out / "graphs" / "merged.json")
    assert len(g) > 0 and len(g.trajectories) == 6
    assert main(["train", "--out", str(out), "--epochs", "5", "--seed", "1"]) == 0
    assert len(read_csv(out / "loss_history.csv")) == 5
    assert "final_loss" in read_json(out / "train_report.json")
    assert main(["embed", "--out", str(out)]) == 0
    emb = read_csv(out / "embeddings.csv")
    assert list(emb[0]) == ["node", "e1", "e2", "e3", "label", "visit_count"]
    assert len(emb) == len(g)
    assert main(["analyze", "--out", str(out), "--iterations", "250"]) == 0
    assert main(["export", "--out", str(out)]) == 0
    for name in ("success_vs_qdiff.csv", "time_vs_qdiff.csv", "clusters_2d.csv", "embedding_3d.csv"):
        assert (out / "export" / name).exists()
    # subcommands never rewrite their inputs
    after = _hashes(out, "cells/**/*.jsonl")
    after.update(_hashes(out, "metrics.csv"))
    assert before == after
    man = read_manifest(out)
    assert man["complete"]
    assert man["stages"][-1] == "export"
    listed = {f["path"] for f in man["files"]}
    assert "export/clusters_2d.csv" in listed and "model.json" in listed


def test_train_without_subgraphs(tmp_path, capsys):
    assert main(["train", "--out", str(tmp_path / "empty")]) != 0
    assert "no subgraph samples" in capsys.readouterr().err
    assert read_manifest(tmp_path / "empty")["complete"] is False


def test_malformed_config(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("[campaign]\np_1 = lots\n")
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o")]) != 0
    assert "p_1" in capsys.readouterr().err


def test_unknown_flag(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["simulate", "--out", str(tmp_path), "--bogus"])
    assert exc.value.code != 0


def test_analyze_experiment1_corpus(tmp_path):
    out = tmp_path / "e1"
    assert main(["simulate", "--preset", "experiment1", "--repetitions", "20", "--out", str(out)]) == 0
    assert main(["analyze", "--preset", "experiment1", "--out", str(out), "--iterations", "250"]) == 0
    rows = read_csv(out / "node_success.csv")
    assert rows and {"probability", "reliable", "visits"} <= set(rows[0])
    assert {r["reliable"] for r in rows} <= {"0", "1"}
    assert all(0.0 <= float(r["probability"]) <= 1.0 for r in rows)


def test_console_entry_point():
    res = subprocess.run([sys.executable, "-m", "colonygraph.cli", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "simulate" in res.stdout
