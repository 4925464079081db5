"""Score a recommendations file: run each recommended pipeline on its table
several times and report the median accuracy per dataset.

Input is the tab-separated recommendations format
(``dataset_id<TAB>feature_processor<TAB>estimator``); output rows are
``dataset<TAB>accuracy<TAB>time_s`` with ``#`` comment lines, the per-dataset
result format the recommender's report command consumes.
"""

from __future__ import annotations

import csv
import dataclasses
import statistics

import numpy as np

from .config import HarnessConfig, HarnessError
from .pipelines import majority_class_accuracy, run_pipeline


def load_table(path: str) -> tuple[np.ndarray, np.ndarray]:
    """Read a CSV classification table: header row, target in the last column,
    non-numeric feature columns ordinal-encoded by first appearance."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if len(rows) < 3:
        raise HarnessError(f"{path}: need a header and at least two data rows")
    width = len(rows[0])
    if width < 2:
        raise HarnessError(f"{path}: need at least one feature and a target")
    for i, row in enumerate(rows):
        if len(row) != width:
            raise HarnessError(f"{path}: row {i + 1} has {len(row)} cells, expected {width}")
    body = rows[1:]
    cols: list[np.ndarray] = []
    for j in range(width - 1):
        raw = [r[j] for r in body]
        try:
            cols.append(np.array([float(v) for v in raw]))
        except ValueError:
            seen: dict[str, int] = {}
            cols.append(np.array([float(seen.setdefault(v, len(seen))) for v in raw]))
    x = np.column_stack(cols)
    labels = [r[-1] for r in body]
    seen = {}
    y = np.array([seen.setdefault(v, len(seen)) for v in labels], dtype=np.int64)
    return x, y


def load_recommendations(path: str) -> list[tuple[str, str, str]]:
    """Parse ``dataset_id<TAB>fp<TAB>estimator`` rows, skipping # comments."""
    recs: list[tuple[str, str, str]] = []
    with open(path, "r", encoding="utf-8") as fh:
        for ln in fh:
            ln = ln.strip()
            if not ln or ln.startswith("#"):
                continue
            parts = ln.split("\t")
            if len(parts) != 3:
                raise HarnessError(f"{path}: bad recommendation row {ln!r}")
            recs.append((parts[0], parts[1], parts[2]))
    if not recs:
        raise HarnessError(f"{path}: no recommendations found")
    return recs


def score_recommendations(
    tables: dict[str, str],
    recommendations_path: str,
    cfg: HarnessConfig,
    runs: int = 5,
) -> str:
    """Run each recommended pipeline `runs` times (distinct split seeds) and
    emit per-dataset median accuracy and median wall time. A recommendation
    whose dataset has no table is kept as an ``# absent`` comment row.
    """
    cfg.validate()
    if runs < 1:
        raise HarnessError("runs must be >= 1")
    out = ["dataset\taccuracy\ttime_s", f"# median across {runs} trials"]
    for dataset_id, fp_name, est_name in load_recommendations(recommendations_path):
        if dataset_id not in tables:
            out.append(f"# absent: {dataset_id}")
            continue
        x, y = load_table(tables[dataset_id])
        accs: list[float] = []
        times: list[float] = []
        for run in range(runs):
            run_cfg = dataclasses.replace(cfg, seed=cfg.seed + run)
            res = run_pipeline(fp_name, est_name, x, y, run_cfg)
            accs.append(res.accuracy)
            times.append(res.wall_time)
        out.append(
            f"{dataset_id}\t{statistics.median(accs):.4f}"
            f"\t{statistics.median(times):.4f}"
        )
    return "\n".join(out) + "\n"


def baseline_accuracies(tables: dict[str, str]) -> dict[str, float]:
    """Majority-class accuracy per table, the recommendation-agnostic floor."""
    return {
        dataset_id: majority_class_accuracy(load_table(path)[1])
        for dataset_id, path in tables.items()
    }
