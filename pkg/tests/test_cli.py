import json
import subprocess
import sys

import numpy as np
import pytest

from linkhe.cli import main
from linkhe.graph import load_split, save_features, save_split, write_edge_list
from linkhe.synthetic import complete_graph, erdos_renyi, planted_cn_task

from conftest import EXAMPLE_EDGES

TRAIN_CFG = {"variant": "HE", "heuristic_kinds": ["cn"], "hidden_dim": 16, "predictor_layers": 2, "dim_h": 8,
             "lr": 0.01, "batch_size": 256, "epochs": 30, "dropout": 0.0, "valid_metric": "auc"}


@pytest.fixture
def planted(tmp_path):
    _, split = planted_cn_task(120, np.random.default_rng(0))
    save_split(split, tmp_path / "split")
    (tmp_path / "cfg.json").write_text(json.dumps(TRAIN_CFG))
    return tmp_path


def test_ingest_sizes_and_reproducibility(tmp_path):
    g = erdos_renyi(40, 0.3, np.random.default_rng(0))
    write_edge_list(tmp_path / "g.tsv", g.edges()[:100])
    for out in ("a", "b"):
        assert main(["ingest", "--graph", str(tmp_path / "g.tsv"), "--out", str(tmp_path / out), "--seed", "7"]) == 0
    split = load_split(tmp_path / "a")
    assert (len(split.train_pos), len(split.valid_pos), len(split.test_pos)) == (80, 10, 10)
    for name in ("train.tsv", "valid_pos.tsv", "valid_neg.tsv", "test_pos.tsv", "test_neg.tsv", "meta.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    manifest = json.loads((tmp_path / "a" / "run_manifest.json").read_text())
    assert manifest["command"] == "ingest" and manifest["seed"] == 7
    code = main(["ingest", "--graph", str(tmp_path / "g.tsv"), "--out", str(tmp_path / "c"), "--fractions", "0.8,0.05,0.05"])
    assert code == 1


def test_heuristics_csv(tmp_path, capsys):
    write_edge_list(tmp_path / "g.tsv", EXAMPLE_EDGES)
    write_edge_list(tmp_path / "p.tsv", [(1, 4)])
    out = tmp_path / "s.csv"
    args = ["heuristics", "--graph", str(tmp_path / "g.tsv"), "--pairs", str(tmp_path / "p.tsv"), "--out", str(out)]
    assert main(args + ["--kinds", "cn,aa"]) == 0
    header, row = out.read_text().splitlines()
    assert header == "v,u,cn,aa"
    assert row.startswith("1,4,2,") and float(row.split(",")[3]) == pytest.approx(2 / np.log(2))
    assert (tmp_path / "s.csv.manifest.json").exists()

    assert main(args + ["--kinds", "cn,nope"]) == 1
    assert "valid names: cn, ja, aa" in capsys.readouterr().err

    (tmp_path / "p.tsv").write_text("")
    assert main(args + ["--kinds", "cn"]) == 0
    assert out.read_text() == "v,u,cn\n"

    write_edge_list(tmp_path / "p.tsv", [(1, 40)])
    assert main(args + ["--kinds", "cn"]) == 2


def test_train_then_eval(planted):
    run, ev = planted / "run", planted / "ev"
    assert main(["train", "--config", str(planted / "cfg.json"), "--split", str(planted / "split"), "--out", str(run)]) == 0
    assert (run / "run_manifest.json").exists() and (run / "best" / "manifest.json").exists()
    assert len((run / "train_log.jsonl").read_text().splitlines()) >= 1
    assert main(["eval", "--checkpoint", str(run / "best"), "--split", str(planted / "split"), "--out", str(ev)]) == 0
    metrics = json.loads((ev / "metrics.json").read_text())
    assert metrics["test_auc"] >= 0.95
    assert (ev / "metrics.csv").exists()


def test_repeated_seed_gives_identical_metrics(planted):
    blobs = []
    for tag in ("a", "b"):
        run = planted / f"run_{tag}"
        assert main(["train", "--config", str(planted / "cfg.json"), "--split", str(planted / "split"),
                     "--out", str(run), "--seed", "5"]) == 0
        assert main(["eval", "--checkpoint", str(run / "best"), "--split", str(planted / "split"),
                     "--out", str(run / "ev")]) == 0
        blobs.append((run / "ev" / "metrics.json").read_bytes())
    assert blobs[0] == blobs[1]


def test_eval_rejects_node_count_mismatch(planted):
    run = planted / "run"
    assert main(["train", "--config", str(planted / "cfg.json"), "--split", str(planted / "split"), "--out", str(run)]) == 0
    split = load_split(planted / "split")
    split.node_count += 5
    save_split(split, planted / "bigger")
    assert main(["eval", "--checkpoint", str(run / "best"), "--split", str(planted / "bigger"), "--out", str(planted / "ev")]) == 2


def test_features_file_is_used(planted):
    cfg = {**TRAIN_CFG, "variant": "GNN_X", "heuristic_kinds": [], "epochs": 2}
    (planted / "x.json").write_text(json.dumps(cfg))
    args = ["train", "--config", str(planted / "x.json"), "--split", str(planted / "split"), "--out", str(planted / "r")]
    assert main(args) == 1
    save_features(planted / "split" / "features.txt", np.random.default_rng(0).normal(size=(120, 4)))
    assert main(args) == 0


def test_manifest_written_before_failure(tmp_path):
    (tmp_path / "cfg.json").write_text(json.dumps(TRAIN_CFG))
    (tmp_path / "split").mkdir()
    code = main(["train", "--config", str(tmp_path / "cfg.json"), "--split", str(tmp_path / "split"), "--out", str(tmp_path / "run")])
    assert code == 2
    assert (tmp_path / "run" / "run_manifest.json").exists()
    assert not (tmp_path / "run" / "best").exists()


def test_exit_codes(tmp_path):
    assert main([]) == 1
    assert main(["train", "-c", "x"]) == 1
    write_edge_list(tmp_path / "k.tsv", complete_graph(5).edges())
    assert main(["ingest", "--graph", str(tmp_path / "k.tsv"), "--out", str(tmp_path / "s")]) == 3
    assert main(["ingest", "--graph", str(tmp_path / "missing.tsv"), "--out", str(tmp_path / "s")]) == 2
    (tmp_path / "bad.json").write_text('{"variant": "GNN_NE", "colour": 1}')
    assert main(["train", "--config", str(tmp_path / "bad.json"), "--split", str(tmp_path), "--out", str(tmp_path / "r")]) == 1


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "linkhe", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.strip() == "0.1.0"
    proc = subprocess.run([sys.executable, "-m", "linkhe", "frobnicate"], capture_output=True, text=True)
    assert proc.returncode == 1
