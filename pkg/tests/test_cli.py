import csv
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from graphrank import load_dataset, normalize_adjacency
from graphrank.cli import main
from graphrank.experiments import ABLATION_HEADER, BENCH_HEADER, SWEEP_HEADER
from graphrank.numkit import gcn_forward, load_embeddings, load_params, save_embeddings

SMALL = ["--epochs", "10", "--hidden-dim", "16", "--out-dim", "8"]


@pytest.fixture
def data_dir(tmp_path):
    assert main(["synth", "--n", "80", "--num-classes", "4", "--feat-dim", "12", "--seed", "1", "--out-dir", str(tmp_path / "d")]) == 0
    return tmp_path / "d"


def run(*args):
    return main([str(a) for a in args])


def read_csv(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def test_synth_defaults_loadable_and_seeded(tmp_path):
    assert run("synth", "--out-dir", tmp_path / "a", "--seed", "3") == 0
    assert run("synth", "--out-dir", tmp_path / "b", "--seed", "3") == 0
    ds = load_dataset(tmp_path / "a")
    assert ds.num_nodes == 400 and ds.num_classes == 4
    for name in ("graph.edges", "features.csv", "labels.txt", "meta.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert manifest["status"] == "ok" and manifest["seed"] == 3 and manifest["end"]
    assert all(Path(p).exists() for p in manifest["artifacts"])


def test_synth_rejects_p_in_below_p_out(tmp_path, capsys):
    assert run("synth", "--p-in", "0.01", "--p-out", "0.1", "--out-dir", tmp_path) == 2
    assert "p-in" in capsys.readouterr().err
    assert not (tmp_path / "graph.edges").exists()


def test_usage_errors_exit_2(tmp_path, data_dir):
    with pytest.raises(SystemExit) as info:
        main(["train", "--data", str(data_dir), "--no-such-flag"])
    assert info.value.code == 2
    with pytest.raises(SystemExit) as info:
        main(["sweep", "--data", str(data_dir), "--axis", "margin"])
    assert info.value.code == 2
    assert run("train", "--data", data_dir, "--loss", "bogus", "--out-dir", tmp_path / "x") == 2


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_runtime_failure_exit_1_marks_manifest(tmp_path, data_dir):
    assert run("train", "--data", tmp_path / "missing", "--out-dir", tmp_path / "o") == 1
    assert run("train", "--data", data_dir, "--lr", "1e30", "--loss", "infonce", "--epochs", "50", "--out-dir", tmp_path / "o") == 1
    manifest = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert manifest["status"] == "error" and "diverged" in manifest["error"]


def test_train_writes_artifacts_and_zero_lr_equals_fresh_forward(tmp_path, data_dir):
    out = tmp_path / "t"
    assert run("train", "--data", data_dir, "--epochs", "1", "--lr", "0", "--precision", "double", "--out-dir", out) == 0
    Z = load_embeddings(out / "embeddings.bin")
    ds = load_dataset(data_dir)
    params = load_params(out / "params.bin")
    fresh, _ = gcn_forward(params, normalize_adjacency(ds.graph), ds.features)
    assert np.array_equal(Z, fresh)
    sidecar = json.loads((out / "embeddings.bin.json").read_text())
    assert (sidecar["rows"], sidecar["cols"]) == (80, 256)
    assert read_csv(out / "epochs.csv")[0] == ["epoch", "loss", "seconds"]
    report = json.loads((out / "report.json").read_text())
    assert report["config"]["lr"] == 0.0


def test_config_precedence(tmp_path, data_dir):
    cfg = tmp_path / "c.toml"
    cfg.write_text("epochs = 4\nmargin = 0.5\nloss = infonce\n")
    assert run("train", "--data", data_dir, "--config", cfg, "--epochs", "3", "--out-dir", tmp_path / "o", "--hidden-dim", "8") == 0
    used = json.loads((tmp_path / "o" / "manifest.json").read_text())["config"]
    assert (used["epochs"], used["margin"], used["loss"], used["hidden_dim"]) == (3, 0.5, "infonce", 8)
    assert used["lr"] == 1e-3


def test_negatives_flag_accepts_count_or_mode(tmp_path, data_dir):
    assert run("train", "--data", data_dir, *SMALL, "--negatives", "3", "--out-dir", tmp_path / "a") == 0
    assert json.loads((tmp_path / "a" / "manifest.json").read_text())["config"]["num_negatives"] == 3
    assert run("train", "--data", data_dir, *SMALL, "--loss", "infonce", "--negatives", "all", "--out-dir", tmp_path / "b") == 0
    assert json.loads((tmp_path / "b" / "manifest.json").read_text())["config"]["negatives"] == "all"


def test_global_flags_before_or_after_subcommand(tmp_path, data_dir):
    assert main(["--seed", "5", "--out-dir", str(tmp_path / "a"), "train", "--data", str(data_dir), *SMALL]) == 0
    assert main(["train", "--data", str(data_dir), *SMALL, "--seed", "5", "--out-dir", str(tmp_path / "b")]) == 0
    assert (tmp_path / "a" / "embeddings.bin").read_bytes() == (tmp_path / "b" / "embeddings.bin").read_bytes()


def test_eval_classify_on_one_hot_embeddings(tmp_path, data_dir):
    ds = load_dataset(data_dir)
    save_embeddings(np.eye(ds.num_classes)[ds.labels], tmp_path / "z.bin")
    assert run("eval", "--data", data_dir, "--embeddings", tmp_path / "z.bin", "--task", "classify,cluster,geometry",
               "--fractions", "0.3,0.2", "--out-dir", tmp_path / "e") == 0
    rep = json.loads((tmp_path / "e" / "eval.json").read_text())
    assert rep["accuracy"] == 1.0
    assert rep["nmi"] == pytest.approx(1.0) and rep["ari"] == pytest.approx(1.0)
    assert rep["intra_class_variance"] == 0.0 and rep["inter_class_distance"] == pytest.approx(np.sqrt(2))


def test_eval_errors(tmp_path, data_dir):
    save_embeddings(np.ones((5, 2)), tmp_path / "z.bin")
    assert run("eval", "--data", data_dir, "--embeddings", tmp_path / "z.bin", "--out-dir", tmp_path / "e") == 1
    save_embeddings(np.ones((80, 2)), tmp_path / "z.bin")
    assert run("eval", "--data", data_dir, "--embeddings", tmp_path / "z.bin", "--task", "link", "--out-dir", tmp_path / "e") == 2
    assert run("eval", "--data", data_dir, "--embeddings", tmp_path / "z.bin", "--task", "magic", "--out-dir", tmp_path / "e") == 2


def test_link_pipeline_is_reproducible(tmp_path, data_dir):
    assert run("split", "--data", data_dir, "--kind", "edge", "--seed", "2", "--out-dir", tmp_path / "s") == 0
    es = tmp_path / "s" / "edge_splits.json"
    aucs = []
    for tag in "ab":
        assert run("train", "--data", data_dir, *SMALL, "--edge-split", es, "--out-dir", tmp_path / tag) == 0
        assert run("eval", "--data", data_dir, "--embeddings", tmp_path / tag / "embeddings.bin", "--task", "link",
                   "--edge-split", es, "--out-dir", tmp_path / tag) == 0
        aucs.append(json.loads((tmp_path / tag / "eval.json").read_text())["auc"])
    assert aucs[0] == aucs[1]
    assert (tmp_path / "a" / "eval.json").read_bytes() == (tmp_path / "b" / "eval.json").read_bytes()


def test_node_split_command(tmp_path, data_dir):
    assert run("split", "--data", data_dir, "--per-class", "5", "--n-val", "10", "--n-test", "30", "--out-dir", tmp_path) == 0
    split = json.loads((tmp_path / "splits.json").read_text())
    assert (len(split["train"]), len(split["val"]), len(split["test"])) == (20, 10, 30)


def test_sweep_rows_and_header(tmp_path, data_dir):
    assert run("sweep", "--data", data_dir, "--axis", "margin", "--values", "0,0.5,1,5", "--seeds", "0,1,2,3,4",
               *SMALL, "--epochs", "3", "--out-dir", tmp_path) == 0
    rows = read_csv(tmp_path / "sweep.csv")
    assert ",".join(rows[0]) == "axis,value,seed,loss,acc,intra_var,inter_dist,seconds" == ",".join(SWEEP_HEADER)
    assert len(rows) == 21
    assert [(r[1], r[2]) for r in rows[1:]] == [(str(v), str(s)) for v in (0.0, 0.5, 1.0, 5.0) for s in range(5)]


def test_sweep_num_negatives_and_parallel_matches_serial(tmp_path, data_dir):
    args = ["sweep", "--data", data_dir, "--axis", "num_negatives", "--values", "1,2,4,8", "--seeds", "0,1", *SMALL]
    assert run(*args, "--out-dir", tmp_path / "s") == 0
    assert run(*args, "--threads", "2", "--out-dir", tmp_path / "p") == 0
    serial, parallel = read_csv(tmp_path / "s" / "sweep.csv"), read_csv(tmp_path / "p" / "sweep.csv")
    assert len(serial) == 9 and all(r[4] for r in serial[1:])
    strip = lambda rows: [r[:-1] for r in rows]  # wall time is outside the determinism contract
    assert strip(serial) == strip(parallel)


def test_sweep_empty_values_is_usage_error(tmp_path, data_dir):
    assert run("sweep", "--data", data_dir, "--axis", "p_e", "--values", ",", "--out-dir", tmp_path) == 2


def test_ablation_rows(tmp_path, data_dir):
    assert run("ablate-falseneg", "--data", data_dir, "--seeds", "0,1", "--k", "4", *SMALL, "--out-dir", tmp_path / "a") == 0
    rows = read_csv(tmp_path / "a" / "ablation.csv")
    assert rows[0] == ABLATION_HEADER
    assert [(r[0], r[1]) for r in rows[1:]] == [("0", "plain"), ("0", "filtered"), ("1", "plain"), ("1", "filtered")]
    assert run("ablate-falseneg", "--data", data_dir, "--seeds", "0", "--k", "4", "--control", *SMALL, "--out-dir", tmp_path / "b") == 0
    rows = read_csv(tmp_path / "b" / "ablation.csv")
    assert [r[1] for r in rows[1:]] == ["plain", "filtered", "rank"]
    assert rows[3][2:5] == ["rank", "uniform", "1"]


def test_bench_outputs(tmp_path):
    assert run("bench", "--sizes", "100,200", "--bench-epochs", "2", "--repeats", "1", "--hidden-dim", "8",
               "--out-dim", "8", "--feat-dim", "8", "--out-dir", tmp_path) == 0
    rows = read_csv(tmp_path / "bench.csv")
    assert rows[0] == BENCH_HEADER and len(rows) == 3
    assert all(r[5] == r[6] == "ok" for r in rows[1:])
    fit = json.loads((tmp_path / "bench_fit.json").read_text())
    assert {"linear_rss", "quadratic_rss"} <= set(fit)


def test_convert_planetoid(tmp_path):
    (tmp_path / "x.content").write_text("a 1 0 L1\nb 0 1 L2\nc 1 1 L1\n")
    (tmp_path / "x.cites").write_text("a b\nb c\n")
    assert run("convert-planetoid", "--content", tmp_path / "x.content", "--cites", tmp_path / "x.cites",
               "--out-dir", tmp_path / "o") == 0
    ds = load_dataset(tmp_path / "o")
    assert ds.num_nodes == 3 and ds.graph.num_undirected_edges == 2 and ds.name == "cora"


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "graphrank", "synth", "--n", "20", "--feat-dim", "4",
                           "--out-dir", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert json.loads(proc.stdout)["nodes"] == 20
    proc = subprocess.run([sys.executable, "-m", "graphrank", "frobnicate"], capture_output=True, text=True)
    assert proc.returncode == 2
