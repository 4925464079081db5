"""Pipeline execution: build (feature processor, estimator) pairs from the
shared primitive vocabulary, random-search their hyperparameters under a
wall-clock budget, and report validation accuracy.

Tables arrive as (X, y) with X already numeric (the CSV loader in `cli`
ordinal-encodes categorical columns). Each primitive maps to a scikit-learn
construct plus a small hyperparameter grid; one primitive (xgbclassifier)
names a package that is not installed here and raises accordingly.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field

import numpy as np
from sklearn.decomposition import PCA, FastICA
from sklearn.discriminant_analysis import (
    LinearDiscriminantAnalysis,
    QuadraticDiscriminantAnalysis,
)
from sklearn.ensemble import (
    AdaBoostClassifier,
    BaggingClassifier,
    ExtraTreesClassifier,
    GradientBoostingClassifier,
    RandomForestClassifier,
)
from sklearn.feature_selection import (
    RFE,
    SelectFromModel,
    SelectFwe,
    SelectPercentile,
    VarianceThreshold,
    f_classif,
)
from sklearn.kernel_approximation import RBFSampler
from sklearn.linear_model import (
    LogisticRegression,
    PassiveAggressiveClassifier,
    SGDClassifier,
)
from sklearn.model_selection import train_test_split
from sklearn.naive_bayes import BernoulliNB, GaussianNB, MultinomialNB
from sklearn.neighbors import KNeighborsClassifier
from sklearn.pipeline import Pipeline
from sklearn.preprocessing import (
    MaxAbsScaler,
    MinMaxScaler,
    Normalizer,
    PolynomialFeatures,
    RobustScaler,
    StandardScaler,
)
from sklearn.svm import SVC, LinearSVC
from sklearn.tree import DecisionTreeClassifier

from .config import HarnessConfig, HarnessError


@dataclass
class PipelineResult:
    """Outcome of budgeted random search over one pipeline's hyperparameters."""

    feature_processor: str
    estimator: str
    accuracy: float
    wall_time: float
    hyperparameters: dict[str, object] = field(default_factory=dict)
    timed_out: bool = False


def _fs_estimator(seed: int):
    return ExtraTreesClassifier(n_estimators=20, random_state=seed)


# name -> (constructor(seed) -> transformer/estimator or None for passthrough,
#          {param: list of candidate values})
FEATURE_PROCESSORS: dict[str, tuple[object, dict[str, list]]] = {
    "standardscaler": (lambda seed: StandardScaler(), {}),
    "robustscaler": (
        lambda seed: RobustScaler(),
        {"quantile_range": [(25.0, 75.0), (10.0, 90.0), (5.0, 95.0)]},
    ),
    "minmaxscaler": (lambda seed: MinMaxScaler(), {}),
    "normalizer": (lambda seed: Normalizer(), {"norm": ["l1", "l2", "max"]}),
    "maxabsscaler": (lambda seed: MaxAbsScaler(), {}),
    "pca": (
        lambda seed: PCA(random_state=seed),
        {"n_components": [0.5, 0.75, 0.9, 0.99]},
    ),
    "fastica": (
        lambda seed: FastICA(random_state=seed, max_iter=500, whiten="unit-variance"),
        {"n_components": [2, 4, 8]},
    ),
    "polynomial": (
        lambda seed: PolynomialFeatures(),
        {"degree": [2], "interaction_only": [True, False]},
    ),
    "rbfsampler": (
        lambda seed: RBFSampler(random_state=seed),
        {"gamma": [0.1, 0.5, 1.0, 2.0], "n_components": [50, 100]},
    ),
    "selectfwe": (
        lambda seed: SelectFwe(score_func=f_classif),
        {"alpha": [0.01, 0.05, 0.1]},
    ),
    "variancethreshold": (
        lambda seed: VarianceThreshold(),
        {"threshold": [0.0, 1e-4, 1e-2]},
    ),
    "selectfrommodel": (
        lambda seed: SelectFromModel(_fs_estimator(seed)),
        {"threshold": ["mean", "median"]},
    ),
    "select_percentile_classification": (
        lambda seed: SelectPercentile(score_func=f_classif),
        {"percentile": [25, 50, 75, 90]},
    ),
    "rfe": (
        lambda seed: RFE(_fs_estimator(seed)),
        {"n_features_to_select": [0.25, 0.5, 0.75]},
    ),
}

ESTIMATORS: dict[str, tuple[object, dict[str, list]]] = {
    "random_forest": (
        lambda seed: RandomForestClassifier(random_state=seed),
        {"n_estimators": [50, 100, 200], "max_depth": [None, 5, 10]},
    ),
    "bagging": (
        lambda seed: BaggingClassifier(random_state=seed),
        {"n_estimators": [10, 25, 50], "max_samples": [0.5, 0.75, 1.0]},
    ),
    "decision_tree": (
        lambda seed: DecisionTreeClassifier(random_state=seed),
        {"max_depth": [None, 3, 5, 10], "min_samples_leaf": [1, 2, 5]},
    ),
    "liblinear_svc": (
        lambda seed: LinearSVC(random_state=seed),
        {"C": [0.01, 0.1, 1.0, 10.0]},
    ),
    "gradient_boosting": (
        lambda seed: GradientBoostingClassifier(random_state=seed),
        {"n_estimators": [50, 100], "learning_rate": [0.05, 0.1, 0.2]},
    ),
    "libsvm_svc": (
        lambda seed: SVC(random_state=seed),
        {"C": [0.1, 1.0, 10.0], "gamma": ["scale", "auto"]},
    ),
    "extra_trees": (
        lambda seed: ExtraTreesClassifier(random_state=seed),
        {"n_estimators": [50, 100, 200], "max_depth": [None, 5, 10]},
    ),
    "bernoulli_nb": (
        lambda seed: BernoulliNB(),
        {"alpha": [0.01, 0.1, 1.0, 10.0]},
    ),
    "adaboost": (
        lambda seed: AdaBoostClassifier(random_state=seed),
        {"n_estimators": [25, 50, 100], "learning_rate": [0.5, 1.0]},
    ),
    "k_nearest_neighbors": (
        lambda seed: KNeighborsClassifier(),
        {"n_neighbors": [1, 3, 5, 9], "weights": ["uniform", "distance"]},
    ),
    "multinomial_nb": (
        lambda seed: MultinomialNB(),
        {"alpha": [0.01, 0.1, 1.0, 10.0]},
    ),
    "passive_aggressive": (
        lambda seed: PassiveAggressiveClassifier(random_state=seed),
        {"C": [0.01, 0.1, 1.0]},
    ),
    "gaussian_nb": (lambda seed: GaussianNB(), {}),
    "logisticregression": (
        lambda seed: LogisticRegression(random_state=seed, max_iter=1000),
        {"C": [0.01, 0.1, 1.0, 10.0]},
    ),
    "sgd": (
        lambda seed: SGDClassifier(random_state=seed),
        {"alpha": [1e-5, 1e-4, 1e-3], "loss": ["hinge", "log_loss"]},
    ),
    "qda": (
        lambda seed: QuadraticDiscriminantAnalysis(),
        {"reg_param": [0.0, 0.1, 0.5]},
    ),
    "lda": (
        lambda seed: LinearDiscriminantAnalysis(),
        {"solver": ["svd", "lsqr"]},
    ),
    # xgboost is not installed in this environment; constructing this
    # estimator reports the missing package by name.
    "xgbclassifier": (None, {}),
}


def majority_class_accuracy(y: np.ndarray) -> float:
    """Validation accuracy of always predicting the most frequent class."""
    if y.size == 0:
        raise HarnessError("empty label array")
    _, counts = np.unique(y, return_counts=True)
    return float(counts.max()) / float(y.size)


def _draw(rng: np.random.Generator, grid: dict[str, list]) -> dict[str, object]:
    return {k: vals[int(rng.integers(len(vals)))] for k, vals in sorted(grid.items())}


def _build(fp_name: str, est_name: str, seed: int, fp_hp: dict, est_hp: dict):
    fp_ctor, _ = FEATURE_PROCESSORS[fp_name]
    est_ctor, _ = ESTIMATORS[est_name]
    fp = fp_ctor(seed)
    fp.set_params(**fp_hp)
    est = est_ctor(seed)
    est.set_params(**est_hp)
    return Pipeline([("fp", fp), ("est", est)])


def run_pipeline(
    fp_name: str, est_name: str, x: np.ndarray, y: np.ndarray, cfg: HarnessConfig
) -> PipelineResult:
    """Random-search hyperparameters for one pipeline under cfg.budget_s and
    return the best holdout accuracy found (best-so-far on timeout)."""
    cfg.validate()
    if fp_name not in FEATURE_PROCESSORS:
        raise HarnessError(f"unknown feature processor {fp_name!r}")
    if est_name not in ESTIMATORS:
        raise HarnessError(f"unknown estimator {est_name!r}")
    if ESTIMATORS[est_name][0] is None:
        raise HarnessError(
            f"estimator {est_name!r} requires the xgboost package, "
            "which is not installed"
        )
    if x.shape[0] != y.shape[0]:
        raise HarnessError("row count mismatch between features and labels")
    if np.unique(y).size < 2:
        raise HarnessError("table has fewer than two classes")

    # Several primitives (multinomial_nb, rbfsampler with some grids) require
    # non-negative input; shift columns so every pairing gets a fair chance.
    x = x - np.minimum(x.min(axis=0), 0.0)

    stratify = y if np.unique(y, return_counts=True)[1].min() >= 2 else None
    x_tr, x_val, y_tr, y_val = train_test_split(
        x, y, test_size=cfg.val_fraction, random_state=cfg.seed, stratify=stratify
    )

    rng = np.random.default_rng(cfg.seed)
    fp_grid = FEATURE_PROCESSORS[fp_name][1]
    est_grid = ESTIMATORS[est_name][1]

    start = time.perf_counter()
    best_acc = -1.0
    best_hp: dict[str, object] = {}
    timed_out = False
    for trial in range(cfg.trials):
        if trial > 0 and time.perf_counter() - start > cfg.budget_s:
            timed_out = True
            break
        fp_hp = _draw(rng, fp_grid)
        est_hp = _draw(rng, est_grid)
        try:
            pipe = _build(fp_name, est_name, cfg.seed, fp_hp, est_hp)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                pipe.fit(x_tr, y_tr)
                acc = float(pipe.score(x_val, y_val))
        except Exception:
            continue  # a bad draw (e.g. too few features for the grid) is skipped
        if acc > best_acc:
            best_acc = acc
            best_hp = {**{f"fp__{k}": v for k, v in fp_hp.items()},
                       **{f"est__{k}": v for k, v in est_hp.items()}}
    elapsed = time.perf_counter() - start
    if best_acc < 0.0:
        raise HarnessError(
            f"every hyperparameter draw failed for ({fp_name}, {est_name})"
        )
    return PipelineResult(
        feature_processor=fp_name,
        estimator=est_name,
        accuracy=best_acc,
        wall_time=elapsed,
        hyperparameters=best_hp,
        timed_out=timed_out,
    )
