import numpy as np
import pytest

from sgcn import cli
from sgcn import tensorgrad as tg
from sgcn.cli import main, read_kv
from sgcn.synthetic import citation_like, write_citation_files

FAST = ["--set", "format=synthetic-sbm", "--set", "num_nodes=60", "--set", "per_class_train=5",
        "--set", "val_size=15", "--set", "test_size=30", "--set", "K=2", "--set", "d_out=8", "--set", "L=2",
        "--set", "T=2", "--set", "max_epochs=5", "--set", "cluster_restarts=2"]

SUMMARY_KEYS = ["dataset", "seed", "K", "L", "T", "C", "lambda", "best_epoch", "val_metric", "test_acc", "nmi",
                "ari", "wall_seconds"]


def test_train_writes_summary(tmp_path, capsys):
    assert main(["train", *FAST, "--out", str(tmp_path)]) == 0
    summary = read_kv(tmp_path / "summary.kv")
    assert list(summary) == SUMMARY_KEYS
    assert "test_acc=" in capsys.readouterr().out
    assert np.loadtxt(tmp_path / "embeddings.tsv").shape == (60, 3)
    report = (tmp_path / "report.txt").read_text()
    assert "epoch=5 " in report and "K=2" in report


def test_zero_epoch_run(tmp_path):
    assert main(["train", *FAST, "--set", "max_epochs=0", "--out", str(tmp_path)]) == 0
    summary = read_kv(tmp_path / "summary.kv")
    assert summary["best_epoch"] == "0"
    assert 0.0 <= float(summary["test_acc"]) <= 1.0


def test_config_file_relative_paths(tmp_path):
    features, labels, edges = citation_like(120, 3, 0, d_in=60)
    write_citation_files(tmp_path / "data", features, labels, edges, prefix="tiny")
    (tmp_path / "run.cfg").write_text(
        "# tiny citation run\nformat = citation\ncontent_path = data/tiny.content\n"
        "cites_path = data/tiny.cites\nper_class_train = 5\nval_size = 20\ntest_size = 40\n"
        "K = 2\nd_out = 8\nL = 1\nT = 2\nmax_epochs = 3\ncluster_restarts = 2\n")
    assert main(["train", "--config", str(tmp_path / "run.cfg"), "--out", str(tmp_path / "out")]) == 0
    assert "test_acc" in read_kv(tmp_path / "out" / "summary.kv")


def test_seed_flag_overrides(tmp_path):
    assert main(["train", *FAST, "--seed", "7", "--out", str(tmp_path)]) == 0
    assert read_kv(tmp_path / "summary.kv")["seed"] == "7"


@pytest.mark.parametrize("argv", [
    ["train", "--set", "content_path=/nonexistent/x.content", "--set", "cites_path=/nonexistent/x.cites"],
    ["train", "--config", "/nonexistent.cfg"],
    ["train", "--set", "no_such_key=1"],
    ["train", "--set", "K=3"],
    ["train", "--set", "format=citation"],
    ["train", *FAST, "--set", "format=synthetic-multilabel"],
])
def test_config_and_data_errors_exit_1(argv, tmp_path):
    assert main([*argv, "--out", str(tmp_path)]) == 1


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_exits_2(tmp_path):
    assert main(["train", *FAST, "--set", "learning_rate=1e300", "--out", str(tmp_path)]) == 2


def test_gradcheck_default_passes(tmp_path, capsys):
    assert main(["gradcheck", "--out", str(tmp_path)]) == 0
    values = read_kv(tmp_path / "gradcheck.kv")
    assert set(values) == {"W", "b", "w", "W_y", "b_y", "max"}
    assert float(values["max"]) <= 1e-3


def test_gradcheck_linear_toy():
    cfg = cli.RunConfig.load(None, ["K=1", "d_out=4", "L=1", "T=1"], cli.GRADCHECK_DEFAULTS)
    assert cli.cmd_gradcheck(cfg) == 0


def test_gradcheck_catches_wrong_rule(monkeypatch, capsys):
    real_relu = tg.relu

    def broken_relu(x):
        out = real_relu(x)
        if out.tape_id is not None:
            record = tg.active_tape().records[-1]
            rule = record.rule
            record.rule = lambda g: tuple(0.5 * r for r in rule(g))
        return out

    monkeypatch.setattr(tg, "relu", broken_relu)
    assert main(["gradcheck"]) == 3
    assert "failed" in capsys.readouterr().err


def test_cluster_on_perfect_blobs(tmp_path, capsys):
    labels = np.repeat([0, 1, 2], 10)
    emb = np.array([[10.0, 0.0], [0.0, 10.0], [-10.0, -10.0]])[labels] + 0.01 * np.random.default_rng(0).normal(
        size=(30, 2))
    np.savetxt(tmp_path / "emb.tsv", emb, delimiter="\t")
    np.savetxt(tmp_path / "labels.txt", labels, fmt="%d")
    code = main(["cluster", "--embeddings", str(tmp_path / "emb.tsv"), "--labels", str(tmp_path / "labels.txt"),
                 "--out", str(tmp_path)])
    assert code == 0
    result = read_kv(tmp_path / "cluster.kv")
    assert float(result["nmi"]) == pytest.approx(1.0) and float(result["ari"]) == pytest.approx(1.0)


def test_cluster_missing_file(tmp_path):
    assert main(["cluster", "--embeddings", str(tmp_path / "nope.tsv"), "--out", str(tmp_path)]) == 1


def test_cluster_uses_configured_dataset_labels(tmp_path):
    assert main(["train", *FAST, "--out", str(tmp_path)]) == 0
    assert main(["cluster", *FAST, "--embeddings", str(tmp_path / "embeddings.tsv"), "--out", str(tmp_path)]) == 0
    assert float(read_kv(tmp_path / "cluster.kv")["nmi"]) == pytest.approx(float(read_kv(tmp_path / "summary.kv")["nmi"]))


def test_paths_histogram_and_sweep(tmp_path):
    assert main(["paths", *FAST, "--set", "max_epochs=2", "--out", str(tmp_path)]) == 0
    hist = (tmp_path / "paths.txt").read_text().splitlines()
    assert len(hist) == 4 and all(len(line.split(",")) == 3 for line in hist)
    rows = (tmp_path / "sweep.tsv").read_text().splitlines()
    assert rows[0].startswith("C\t")
    assert [r.split("\t")[0] for r in rows[1:]] == ["0", "2", "5", "8"]


def test_paths_without_cap_is_empty(tmp_path):
    assert main(["paths", *FAST, "--set", "max_epochs=1", "--set", "C=0", "--set", "sweep_C=0",
                 "--out", str(tmp_path)]) == 0
    assert (tmp_path / "paths.txt").read_text() == ""
    assert len((tmp_path / "sweep.tsv").read_text().splitlines()) == 2


def test_multilabel_summary_keys(tmp_path):
    argv = ["train", "--set", "format=synthetic-multilabel", "--set", "task=multi-label", "--set", "K=2",
            "--set", "d_out=8", "--set", "L=1", "--set", "T=2", "--set", "max_epochs=3"]
    assert main([*argv, "--out", str(tmp_path)]) == 0
    summary = read_kv(tmp_path / "summary.kv")
    assert {"test_macro_f1", "test_micro_f1"} <= set(summary)
    assert "nmi" not in summary and "test_acc" not in summary
