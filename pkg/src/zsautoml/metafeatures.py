"""Meta-feature extraction for tabular datasets, plus train-split standardization.

The registry has 42 features: dataset counts, class-distribution statistics,
aggregates of per-numeric-column moments, categorical cardinality aggregates,
per-column missingness aggregates, and three fast landmarkers (majority class,
decision stump, one-nearest-neighbor). Every feature is row-order invariant;
landmarkers run on a canonicalized subsample of at most 200 rows whose seed
derives from the dataset id, so extraction is deterministic and fast.

See docs/metafeatures.md for the name -> definition table.
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass

import numpy as np

from .catalog import DataTable

LANDMARK_MAX_ROWS = 200
STD_FLOOR = 1e-8

METAFEATURE_NAMES = [
    # counts
    "n_rows",
    "n_features",
    "n_classes",
    "n_numeric_features",
    "n_categorical_features",
    "missing_cell_ratio",
    # shape
    "log_n_rows",
    "log_n_features",
    "rows_per_feature",
    "numeric_ratio",
    "categorical_ratio",
    # class distribution
    "class_entropy",
    "class_prob_min",
    "class_prob_max",
    "class_prob_mean",
    "class_imbalance",
    # aggregates of per-numeric-column statistics
    "col_mean_mean",
    "col_mean_min",
    "col_mean_max",
    "col_mean_std",
    "col_std_mean",
    "col_std_min",
    "col_std_max",
    "col_std_std",
    "col_skew_mean",
    "col_skew_min",
    "col_skew_max",
    "col_skew_std",
    "col_kurt_mean",
    "col_kurt_min",
    "col_kurt_max",
    "col_kurt_std",
    # categorical cardinalities
    "cardinality_mean",
    "cardinality_min",
    "cardinality_max",
    "cardinality_std",
    # per-column missingness
    "col_missing_mean",
    "col_missing_max",
    "col_missing_std",
    # landmarkers
    "majority_class_accuracy",
    "decision_stump_accuracy",
    "one_nn_accuracy",
]

META_WIDTH = len(METAFEATURE_NAMES)


@dataclass
class MetaFeatureVector:
    values: np.ndarray
    names: list[str]
    imputed: int = 0  # count of undefined statistics replaced by 0

    @property
    def width(self) -> int:
        return int(self.values.size)


@dataclass
class Standardizer:
    mean: np.ndarray
    std: np.ndarray  # floored: dimensions with variance < STD_FLOOR get std 1

    @property
    def width(self) -> int:
        return int(self.mean.size)


def _pop_std(x: np.ndarray) -> float:
    return float(np.sqrt(np.mean((x - x.mean()) ** 2)))


def _moments(x: np.ndarray) -> tuple[float, float, float, float, int]:
    """(mean, std, skew, excess kurtosis, n_imputed) with population conventions."""
    imputed = 0
    m = float(x.mean())
    s = _pop_std(x)
    if s < STD_FLOOR:
        skew = 0.0
        kurt = 0.0
        imputed += 2
    else:
        z = (x - m) / s
        skew = float(np.mean(z**3))
        kurt = float(np.mean(z**4) - 3.0)
    return m, s, skew, kurt, imputed


def _aggregate(vals: list[float]) -> tuple[list[float], int]:
    """mean/min/max/std over a per-column statistic list (0s when empty)."""
    if not vals:
        return [0.0, 0.0, 0.0, 0.0], 4
    a = np.asarray(vals, dtype=np.float64)
    return [float(a.mean()), float(a.min()), float(a.max()), _pop_std(a)], 0


def _canonical_order(table: DataTable) -> list[int]:
    keys = [
        tuple("" if c is None else repr(c) for c in row) for row in table.cells
    ]
    return sorted(range(len(keys)), key=keys.__getitem__)


def _landmark_rows(table: DataTable, dataset_id: str) -> list[int]:
    order = _canonical_order(table)
    if len(order) <= LANDMARK_MAX_ROWS:
        return order
    seed = zlib.crc32(dataset_id.encode("utf-8")) & 0xFFFFFFFF
    rng = np.random.default_rng(seed)
    pick = rng.choice(len(order), size=LANDMARK_MAX_ROWS, replace=False)
    return [order[i] for i in sorted(pick.tolist())]


def _encode_features(table: DataTable, rows: list[int]) -> np.ndarray:
    """Rows x features float matrix: numeric as-is (mean-imputed), categorical coded."""
    cols = []
    for c in table.feature_indices:
        cells = [table.cells[r][c] for r in rows]
        if table.kinds[c] == "numeric":
            vals = np.array(
                [float(v) if v is not None else np.nan for v in cells], dtype=np.float64
            )
            if np.isnan(vals).all():
                vals = np.zeros_like(vals)
            else:
                vals = np.where(np.isnan(vals), np.nanmean(vals), vals)
        else:
            cats = sorted({v if v is not None else "" for v in cells})
            code = {cat: float(i) for i, cat in enumerate(cats)}
            vals = np.array([code[v if v is not None else ""] for v in cells])
        cols.append(vals)
    if not cols:
        return np.zeros((len(rows), 0), dtype=np.float64)
    x = np.stack(cols, axis=1)
    mean = x.mean(axis=0)
    std = np.sqrt(np.mean((x - mean) ** 2, axis=0))
    std = np.where(std < STD_FLOOR, 1.0, std)
    return (x - mean) / std


def _majority_accuracy(y: list[str]) -> float:
    counts: dict[str, int] = {}
    for v in y:
        counts[v] = counts.get(v, 0) + 1
    return max(counts.values()) / len(y)


def _stump_accuracy(table: DataTable, rows: list[int], y: list[str]) -> float:
    """Best single-feature one-level split accuracy on the subsample."""
    best = _majority_accuracy(y)
    m = len(rows)
    y_arr = np.array(y)
    for c in table.feature_indices:
        cells = [table.cells[r][c] for r in rows]
        if table.kinds[c] == "numeric":
            vals = np.array(
                [float(v) if v is not None else np.nan for v in cells], dtype=np.float64
            )
            finite = vals[~np.isnan(vals)]
            if finite.size == 0:
                continue
            fill = float(finite.mean())
            vals = np.where(np.isnan(vals), fill, vals)
            uniq = np.unique(vals)
            if uniq.size < 2:
                continue
            mids = (uniq[:-1] + uniq[1:]) / 2.0
            if mids.size > 32:
                idx = np.linspace(0, mids.size - 1, 32).round().astype(int)
                mids = mids[np.unique(idx)]
            for t in mids:
                left = vals <= t
                acc = 0
                for side in (left, ~left):
                    if side.any():
                        labs, cnts = np.unique(y_arr[side], return_counts=True)
                        acc += int(cnts.max())
                best = max(best, acc / m)
        else:
            correct = 0
            groups: dict[str, list[int]] = {}
            for i, v in enumerate(cells):
                groups.setdefault(v if v is not None else "", []).append(i)
            for idxs in groups.values():
                labs, cnts = np.unique(y_arr[idxs], return_counts=True)
                correct += int(cnts.max())
            best = max(best, correct / m)
    return best


def _one_nn_accuracy(x: np.ndarray, y: list[str]) -> float:
    m = len(y)
    if m < 2 or x.shape[1] == 0:
        return _majority_accuracy(y)
    sq = np.sum(x**2, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (x @ x.T)
    np.fill_diagonal(d2, np.inf)
    nn = np.argmin(d2, axis=1)  # ties resolve to the lower index
    y_arr = np.array(y)
    return float(np.mean(y_arr[nn] == y_arr))


def compute_metafeatures(table: DataTable, dataset_id: str = "") -> MetaFeatureVector:
    """Compute the 42-feature registry vector for a table.

    Undefined statistics (e.g. skewness of a constant column) yield 0 and are
    counted in ``imputed``. Deterministic for a fixed dataset id.
    """
    # Compute everything on a canonically ordered copy so the result is
    # bit-identical under any permutation of the input rows (floating-point
    # summation is order sensitive).
    order = _canonical_order(table)
    table = DataTable(
        columns=table.columns,
        kinds=table.kinds,
        cells=[table.cells[i] for i in order],
        target_index=table.target_index,
    )
    imputed = 0
    feats = table.feature_indices
    n_rows = table.n_rows
    n_features = len(feats)
    numeric = [c for c in feats if table.kinds[c] == "numeric"]
    categorical = [c for c in feats if table.kinds[c] == "categorical"]

    total_cells = n_rows * max(n_features, 1)
    missing = sum(1 for r in table.cells for c in feats if r[c] is None)
    missing_ratio = missing / total_cells if n_features else 0.0

    y_full = table.target_values()
    counts: dict[str, int] = {}
    for v in y_full:
        counts[v] = counts.get(v, 0) + 1
    probs = np.array(sorted(counts.values()), dtype=np.float64) / n_rows
    entropy = float(-(probs * np.log2(probs)).sum())
    p_min, p_max = float(probs.min()), float(probs.max())
    imbalance = p_max / p_min if p_min > 0 else 0.0

    means, stds, skews, kurts = [], [], [], []
    for c in numeric:
        vals = np.array(
            [float(r[c]) for r in table.cells if r[c] is not None], dtype=np.float64
        )
        if vals.size == 0:
            imputed += 4
            continue
        m, s, sk, ku, imp = _moments(vals)
        imputed += imp
        means.append(m)
        stds.append(s)
        skews.append(sk)
        kurts.append(ku)

    agg_vals: list[float] = []
    for stat in (means, stds, skews, kurts):
        a, imp = _aggregate(stat)
        agg_vals.extend(a)
        imputed += imp

    cards = [
        float(len({r[c] for r in table.cells if r[c] is not None})) for c in categorical
    ]
    card_agg, imp = _aggregate(cards)
    imputed += imp

    col_missing = [sum(1 for r in table.cells if r[c] is None) / n_rows for c in feats]
    if col_missing:
        cm = np.asarray(col_missing)
        miss_agg = [float(cm.mean()), float(cm.max()), _pop_std(cm)]
    else:
        miss_agg = [0.0, 0.0, 0.0]
        imputed += 3

    rows = _landmark_rows(table, dataset_id)
    y_sub = [y_full[r] for r in rows]
    x_sub = _encode_features(table, rows)
    majority = _majority_accuracy(y_sub)
    stump = _stump_accuracy(table, rows, y_sub)
    one_nn = _one_nn_accuracy(x_sub, y_sub)

    values = np.array(
        [
            float(n_rows),
            float(n_features),
            float(len(counts)),
            float(len(numeric)),
            float(len(categorical)),
            missing_ratio,
            math.log(n_rows),
            math.log(n_features) if n_features else 0.0,
            n_rows / n_features if n_features else 0.0,
            len(numeric) / n_features if n_features else 0.0,
            len(categorical) / n_features if n_features else 0.0,
            entropy,
            p_min,
            p_max,
            float(probs.mean()),
            imbalance,
            *agg_vals,
            *card_agg,
            *miss_agg,
            majority,
            stump,
            one_nn,
        ],
        dtype=np.float64,
    )
    assert values.size == META_WIDTH
    if not np.all(np.isfinite(values)):
        bad = [METAFEATURE_NAMES[i] for i in np.where(~np.isfinite(values))[0]]
        raise AssertionError(f"non-finite meta-features: {bad}")
    return MetaFeatureVector(values=values, names=METAFEATURE_NAMES, imputed=imputed)


def fit_standardizer(vectors: list[MetaFeatureVector | np.ndarray]) -> Standardizer:
    """Per-dimension mean/std (population) over >= 2 vectors; low-variance dims get std 1."""
    if len(vectors) < 2:
        raise ValueError(f"need at least 2 vectors to fit a standardizer, got {len(vectors)}")
    arrs = [v.values if isinstance(v, MetaFeatureVector) else np.asarray(v) for v in vectors]
    widths = {a.size for a in arrs}
    if len(widths) != 1:
        raise ValueError(f"inconsistent vector widths: {sorted(widths)}")
    x = np.stack(arrs)
    mean = x.mean(axis=0)
    std = np.sqrt(np.mean((x - mean) ** 2, axis=0))
    std = np.where(std < STD_FLOOR, 1.0, std)
    return Standardizer(mean=mean, std=std)


def standardize(v: MetaFeatureVector | np.ndarray, s: Standardizer) -> np.ndarray:
    x = v.values if isinstance(v, MetaFeatureVector) else np.asarray(v, dtype=np.float64)
    if x.size != s.width:
        raise ValueError(f"vector width {x.size} != standardizer width {s.width}")
    return (x - s.mean) / s.std
