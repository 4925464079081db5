"""Scoring a recommendations file into per-dataset result rows."""

import subprocess
import sys

import pytest

from zsharness import HarnessConfig, HarnessError, score_recommendations
from zsharness.cli import reference_tables
from zsharness.scoring import baseline_accuracies, load_recommendations, load_table


def _write_recs(tmp_path, rows):
    path = tmp_path / "recs.tsv"
    path.write_text("".join(f"{r[0]}\t{r[1]}\t{r[2]}\n" for r in rows))
    return str(path)


def test_load_table_encodes_categorical_columns():
    x, y = load_table(reference_tables()["mixed2"])
    assert x.shape == (120, 3)
    assert set(map(int, y)) == {0, 1}
    assert set(map(int, x[:, 2])) <= {0, 1, 2}  # ordinal-coded color column


def test_load_recommendations_skips_comments(tmp_path):
    path = tmp_path / "r.tsv"
    path.write_text("# method zero-shot\nd1\tpca\tsgd\n")
    assert load_recommendations(str(path)) == [("d1", "pca", "sgd")]
    path.write_text("d1\tpca\n")
    with pytest.raises(HarnessError, match="bad recommendation row"):
        load_recommendations(str(path))


def test_report_has_median_rows_and_marks_absent_datasets(tmp_path):
    recs = _write_recs(tmp_path, [
        ("separable2", "standardscaler", "decision_tree"),
        ("ghost", "pca", "sgd"),
    ])
    cfg = HarnessConfig(trials=2)
    report = score_recommendations(reference_tables(), recs, cfg, runs=5)
    lines = report.strip().splitlines()
    assert lines[0] == "dataset\taccuracy\ttime_s"
    assert "# median across 5 trials" in lines
    assert "# absent: ghost" in lines
    data = [ln for ln in lines if not ln.startswith(("#", "dataset\t"))]
    assert len(data) == 1
    did, acc, time_s = data[0].split("\t")
    assert did == "separable2"
    assert 0.0 <= float(acc) <= 1.0
    assert float(time_s) >= 0.0


def test_scored_accuracy_meets_recommendation_agnostic_baseline(tmp_path):
    recs = _write_recs(tmp_path, [("blobs3", "minmaxscaler", "k_nearest_neighbors")])
    report = score_recommendations(
        reference_tables(), recs, HarnessConfig(trials=3), runs=3
    )
    row = [ln for ln in report.splitlines() if ln.startswith("blobs3\t")][0]
    assert float(row.split("\t")[1]) >= baseline_accuracies(reference_tables())["blobs3"]


def test_output_consumable_by_recommender_report_command(tmp_path):
    recs = _write_recs(tmp_path, [("separable2", "standardscaler", "gaussian_nb")])
    report = score_recommendations(
        reference_tables(), recs, HarnessConfig(trials=2), runs=3
    )
    results = tmp_path / "results.tsv"
    results.write_text(report)
    out = tmp_path / "merged.tsv"
    proc = subprocess.run(
        [sys.executable, "-m", "zsautoml.cli", "report",
         "--results", str(results), "--out", str(out), "--method", "harness"],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert "Median\tMin\tMax\tMean\tStd" in out.read_text()
