"""End-to-end command-line flow: preprocess -> train -> recommend/eval/bench/
report, plus exit-code conventions."""

import numpy as np
import pytest

from zsautoml.catalog import (
    DEFAULT_ESTIMATORS,
    DEFAULT_FEATURE_PROCESSORS,
    load_catalog,
)
from zsautoml.cli import main
from zsautoml.trainer import load_checkpoint

from conftest import CLUSTER_WORDS, cluster_table, write_csv


def _table_rows(table):
    rows = []
    for row in table.cells:
        out = []
        for c in row:
            if c is None:
                out.append("?")
            elif isinstance(c, float):
                out.append(repr(c))
            else:
                out.append(str(c))
        rows.append(out)
    return rows


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """A manifest of 8 small datasets with labels, plus one held-back table."""
    root = tmp_path_factory.mktemp("cliws")
    rng = np.random.default_rng(11)
    man_lines = ["# synthetic corpus"]
    labels = []
    for i in range(8):
        cluster = i % 2
        table = cluster_table(rng, cluster)
        write_csv(root / f"d{i}.csv", table.columns, _table_rows(table))
        desc = " ".join(rng.choice(CLUSTER_WORDS[cluster], size=6))
        (root / f"d{i}.txt").write_text(desc)
        split = "train" if i < 6 else "test"
        man_lines.append(f"d{i}\t{split}\td{i}.csv\t-\td{i}.txt")
        fp = DEFAULT_FEATURE_PROCESSORS[cluster]
        est = DEFAULT_ESTIMATORS[cluster]
        labels.append(f"d{i}\tO\t{fp}\t{est}\t0.9")
    (root / "manifest.tsv").write_text("\n".join(man_lines) + "\n")
    (root / "labels.tsv").write_text("\n".join(labels) + "\n")
    new_table = cluster_table(rng, 0)
    write_csv(root / "new.csv", new_table.columns, _table_rows(new_table))
    (root / "new.txt").write_text("finance loan account")
    return root


@pytest.fixture(scope="module")
def catalog_path(workspace):
    out = workspace / "corpus.zscat"
    rc = main([
        "preprocess",
        "--manifest", str(workspace / "manifest.tsv"),
        "--labels", str(workspace / "labels.tsv"),
        "--out", str(out),
        "--desc-width", "16",
    ])
    assert rc == 0
    return out


@pytest.fixture(scope="module")
def checkpoint_path(workspace, catalog_path):
    out = workspace / "model.zsckpt"
    rc = main([
        "train",
        "--catalog", str(catalog_path),
        "--out", str(out),
        "--iterations", "30",
        "--eval-every", "10",
        "--k", "3",
        "--d-fused", "16",
        "--d-node", "16",
        "--gat-hidden", "16",
        "--log", str(workspace / "train.log"),
    ])
    assert rc == 0
    return out


def test_preprocess_writes_catalog(workspace, catalog_path):
    cat = load_catalog(str(catalog_path))
    assert len(cat.train_records()) == 6
    assert len(cat.test_records()) == 2
    assert cat.desc_width == 16
    for rec in cat.records.values():
        assert rec.meta is not None
        assert rec.desc_embedding.shape == (16,)
        assert rec.best_label is not None


def test_train_writes_checkpoint_and_log(workspace, checkpoint_path):
    ckpt = load_checkpoint(str(checkpoint_path))
    assert len(ckpt.node_ids) == 6
    assert ckpt.config.d_desc == 16
    log_lines = (workspace / "train.log").read_text().strip().splitlines()
    assert len(log_lines) == 30


def test_recommend_prints_pipeline_and_appends_tsv(workspace, checkpoint_path,
                                                   capsys):
    out_tsv = workspace / "recs.tsv"
    rc = main([
        "recommend",
        "--checkpoint", str(checkpoint_path),
        "--table", str(workspace / "new.csv"),
        "--description", str(workspace / "new.txt"),
        "--id", "newds",
        "--out", str(out_tsv),
    ])
    assert rc == 0
    printed = capsys.readouterr().out
    assert "pipeline:" in printed
    assert "newds" in printed
    row = out_tsv.read_text().strip().split("\t")
    assert row[0] == "newds"
    assert row[1] in DEFAULT_FEATURE_PROCESSORS
    assert row[2] in DEFAULT_ESTIMATORS


def test_eval_prints_metrics(workspace, catalog_path, checkpoint_path, capsys):
    rc = main([
        "eval",
        "--checkpoint", str(checkpoint_path),
        "--catalog", str(catalog_path),
        "--split", "test",
    ])
    assert rc == 0
    out = capsys.readouterr().out
    assert "joint_acc" in out and "mean_loss" in out


def test_bench_prints_phase_table(workspace, checkpoint_path, capsys):
    rc = main([
        "bench",
        "--checkpoint", str(checkpoint_path),
        "--table", str(workspace / "new.csv"),
        "--trials", "10",
    ])
    assert rc == 0
    out = capsys.readouterr().out
    assert "median_ms" in out
    assert "gnn" in out


def test_report_roundtrip(workspace, capsys):
    results = workspace / "results.tsv"
    results.write_text("d1\t0.9\t1.0\nd2\t0.8\t2.0\n")
    out = workspace / "report.tsv"
    rc = main([
        "report", "--results", str(results), "--out", str(out),
        "--method", "zero-shot",
    ])
    assert rc == 0
    text = out.read_text()
    assert "Median\tMin\tMax\tMean\tStd" in text
    assert text.splitlines()[-1].startswith("zero-shot\t")


def test_graph_dump_lists_edges(workspace, checkpoint_path, capsys):
    rc = main(["graph", "dump", "--checkpoint", str(checkpoint_path)])
    assert rc == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines
    for ln in lines:
        a, b, dist = ln.split("\t")
        assert a.startswith("d") and b.startswith("d")
        assert float(dist) >= 0.0


def test_metafeatures_command(workspace, capsys):
    rc = main(["metafeatures", str(workspace / "new.csv")])
    assert rc == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 42
    assert lines[0].startswith("n_rows\t")


def test_ablation_flags_are_exclusive(workspace, catalog_path, capsys):
    rc = main([
        "train",
        "--catalog", str(catalog_path),
        "--out", str(workspace / "x.zsckpt"),
        "--no-description", "--only-description",
    ])
    assert rc == 1


def test_usage_error_exit_code_1(capsys):
    assert main(["recommend"]) == 1  # missing required arguments
    assert main(["definitely-not-a-command"]) == 1


def test_data_error_exit_code_2(workspace, capsys, tmp_path):
    assert main([
        "recommend",
        "--checkpoint", str(tmp_path / "missing.zsckpt"),
        "--table", str(workspace / "new.csv"),
    ]) == 2
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b\n1,2\n3\n")
    assert main(["metafeatures", str(bad)]) == 2
