"""Dataset catalog: records, primitive vocabulary, pipeline labels, persistence.

The catalog is the pre-processing artifact: one record per dataset with its
table reference, free-text description, computed meta-features, description
embedding, and (for labeled datasets) the best-known pipeline label.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np

from .serialize import atomic_write_text, esc, unesc, vec_from_hex, vec_to_hex

CATALOG_MAGIC = "ZSCAT"
CATALOG_VERSION = 1

MISSING_TOKENS = {"", "?", "NA", "N/A", "nan", "NaN"}

SOURCE_ORDER = {"O": 0, "S": 1}  # TensorOBOE before AutoSklearn on ties


class CatalogError(Exception):
    """Malformed input data or a broken catalog invariant."""


# The shipped primitive vocabulary: 18 estimators and 14 feature processors.
DEFAULT_ESTIMATORS = [
    "random_forest",
    "bagging",
    "decision_tree",
    "liblinear_svc",
    "gradient_boosting",
    "libsvm_svc",
    "extra_trees",
    "bernoulli_nb",
    "adaboost",
    "k_nearest_neighbors",
    "multinomial_nb",
    "passive_aggressive",
    "gaussian_nb",
    "logisticregression",
    "sgd",
    "qda",
    "lda",
    "xgbclassifier",
]

DEFAULT_FEATURE_PROCESSORS = [
    "standardscaler",
    "robustscaler",
    "minmaxscaler",
    "normalizer",
    "maxabsscaler",
    "pca",
    "fastica",
    "polynomial",
    "rbfsampler",
    "selectfwe",
    "variancethreshold",
    "selectfrommodel",
    "select_percentile_classification",
    "rfe",
]

# Short reference-documentation excerpts for each primitive; these are the
# texts that get embedded to represent a pipeline's components.
DEFAULT_DOC_TEXT = {
    "random_forest": (
        "A random forest classifier fits a number of decision tree classifiers "
        "on bootstrap sub-samples of the dataset and uses averaging to improve "
        "predictive accuracy and control over-fitting."
    ),
    "bagging": (
        "A bagging classifier is an ensemble meta-estimator that fits base "
        "classifiers on random subsets of the original dataset and aggregates "
        "their individual predictions by voting."
    ),
    "decision_tree": (
        "A decision tree classifier predicts the target by learning simple "
        "decision rules inferred from the data features; splits are chosen by "
        "criteria such as gini impurity or entropy."
    ),
    "liblinear_svc": (
        "Linear support vector classification using the liblinear solver; "
        "scales well to large numbers of samples and supports L1 and L2 "
        "penalties with a squared hinge loss."
    ),
    "gradient_boosting": (
        "Gradient boosting builds an additive model in a forward stage-wise "
        "fashion, fitting regression trees on the negative gradient of the "
        "deviance loss at each stage."
    ),
    "libsvm_svc": (
        "C-support vector classification based on libsvm, with kernel "
        "functions such as rbf, polynomial and sigmoid; fit time scales at "
        "least quadratically with the number of samples."
    ),
    "extra_trees": (
        "An extremely randomized trees classifier fits randomized decision "
        "trees on sub-samples and averages them; split thresholds are drawn at "
        "random for each candidate feature."
    ),
    "bernoulli_nb": (
        "Naive Bayes classifier for multivariate Bernoulli models; designed "
        "for binary or boolean features and estimates per-class feature "
        "occurrence probabilities."
    ),
    "adaboost": (
        "An AdaBoost classifier fits a sequence of weak learners on "
        "repeatedly re-weighted versions of the data, focusing subsequent "
        "learners on previously misclassified instances."
    ),
    "k_nearest_neighbors": (
        "Classifier implementing the k-nearest neighbors vote: the predicted "
        "class of a query point is the majority class among its k closest "
        "training samples under a chosen distance metric."
    ),
    "multinomial_nb": (
        "Naive Bayes classifier for multinomial models, suitable for "
        "classification with discrete non-negative features such as word "
        "counts; uses additive smoothing."
    ),
    "passive_aggressive": (
        "Passive-aggressive classifier: an online large-margin algorithm that "
        "stays passive on correctly classified examples and aggressively "
        "updates weights on margin violations."
    ),
    "gaussian_nb": (
        "Gaussian naive Bayes classification: the per-class likelihood of "
        "each feature is assumed normal, with mean and variance estimated by "
        "maximum likelihood."
    ),
    "logisticregression": (
        "Logistic regression classifier, a linear model for classification "
        "fitting class probabilities with a logistic function; supports L1, L2 "
        "and elastic-net regularization."
    ),
    "sgd": (
        "Linear classifier fitted by stochastic gradient descent, supporting "
        "hinge and log losses; efficient on large and sparse problems with "
        "per-sample weight updates."
    ),
    "qda": (
        "Quadratic discriminant analysis: a classifier with quadratic "
        "decision boundaries obtained by fitting a Gaussian density with its "
        "own covariance matrix to each class."
    ),
    "lda": (
        "Linear discriminant analysis: a classifier with a linear decision "
        "boundary obtained by fitting class-conditional Gaussian densities "
        "that share a single covariance matrix."
    ),
    "xgbclassifier": (
        "Extreme gradient boosting classifier: regularized boosted trees "
        "trained with second-order gradient information, shrinkage and column "
        "subsampling."
    ),
    "standardscaler": (
        "Standardize features by removing the mean and scaling to unit "
        "variance; centering and scaling happen independently per feature."
    ),
    "robustscaler": (
        "Scale features using statistics that are robust to outliers: removes "
        "the median and scales by the interquartile range per feature."
    ),
    "minmaxscaler": (
        "Transform features by scaling each feature to a given range, "
        "typically between zero and one, using per-feature minimum and "
        "maximum."
    ),
    "normalizer": (
        "Normalize samples individually to unit norm: each row is rescaled "
        "independently so that its L1 or L2 norm equals one."
    ),
    "maxabsscaler": (
        "Scale each feature by its maximum absolute value so values lie in "
        "[-1, 1]; does not shift or center the data and preserves sparsity."
    ),
    "pca": (
        "Principal component analysis: linear dimensionality reduction using "
        "singular value decomposition to project data onto the directions of "
        "largest variance."
    ),
    "fastica": (
        "FastICA: a fast algorithm for independent component analysis, "
        "separating a multivariate signal into additive statistically "
        "independent non-Gaussian components."
    ),
    "polynomial": (
        "Generate polynomial and interaction features: a new feature matrix "
        "of all polynomial combinations of the features up to a given degree."
    ),
    "rbfsampler": (
        "Approximate the feature map of an RBF kernel by Monte Carlo random "
        "Fourier features, enabling linear methods to learn kernel decision "
        "boundaries."
    ),
    "selectfwe": (
        "Univariate feature selection keeping the features whose p-values are "
        "below a threshold corrected for the family-wise error rate."
    ),
    "variancethreshold": (
        "Feature selector that removes all low-variance features; a simple "
        "unsupervised baseline that drops near-constant columns."
    ),
    "selectfrommodel": (
        "Meta-transformer selecting features based on importance weights of a "
        "fitted estimator, keeping those above a threshold."
    ),
    "select_percentile_classification": (
        "Univariate feature selection keeping the given percentile of "
        "highest-scoring features under a classification scoring function "
        "such as ANOVA F-value."
    ),
    "rfe": (
        "Recursive feature elimination: fit an external estimator, prune the "
        "least important features, and repeat until the desired number of "
        "features remains."
    ),
}


@dataclass
class PrimitiveVocabulary:
    """Ordered primitive names; index positions are stable for a trained model."""

    estimators: list[str] = field(default_factory=lambda: list(DEFAULT_ESTIMATORS))
    feature_processors: list[str] = field(
        default_factory=lambda: list(DEFAULT_FEATURE_PROCESSORS)
    )
    doc_text: dict[str, str] = field(default_factory=lambda: dict(DEFAULT_DOC_TEXT))

    def __post_init__(self) -> None:
        if len(set(self.estimators)) != len(self.estimators):
            raise CatalogError("duplicate estimator names in vocabulary")
        if len(set(self.feature_processors)) != len(self.feature_processors):
            raise CatalogError("duplicate feature-processor names in vocabulary")

    @property
    def n_estimators(self) -> int:
        return len(self.estimators)

    @property
    def n_feature_processors(self) -> int:
        return len(self.feature_processors)

    def estimator_index(self, name: str) -> int:
        try:
            return self.estimators.index(name)
        except ValueError:
            raise CatalogError(f"unknown estimator {name!r}") from None

    def feature_processor_index(self, name: str) -> int:
        try:
            return self.feature_processors.index(name)
        except ValueError:
            raise CatalogError(f"unknown feature processor {name!r}") from None


@dataclass(frozen=True)
class PipelineLabel:
    """(feature processor, estimator) index pair into a PrimitiveVocabulary."""

    feature_processor: int
    estimator: int

    def validate(self, vocab: PrimitiveVocabulary) -> None:
        if not 0 <= self.feature_processor < vocab.n_feature_processors:
            raise CatalogError(
                f"feature-processor index {self.feature_processor} out of range"
            )
        if not 0 <= self.estimator < vocab.n_estimators:
            raise CatalogError(f"estimator index {self.estimator} out of range")

    def names(self, vocab: PrimitiveVocabulary) -> tuple[str, str]:
        return (
            vocab.feature_processors[self.feature_processor],
            vocab.estimators[self.estimator],
        )


@dataclass(frozen=True)
class PerformanceRecord:
    dataset_id: str
    source: str  # "O" (TensorOBOE) or "S" (AutoSklearn)
    pipeline: PipelineLabel
    accuracy: float


@dataclass
class DataTable:
    columns: list[str]
    kinds: list[str]  # "numeric" | "categorical", per column
    cells: list[list[str | None]]  # None marks a missing cell
    target_index: int

    @property
    def n_rows(self) -> int:
        return len(self.cells)

    @property
    def feature_indices(self) -> list[int]:
        return [i for i in range(len(self.columns)) if i != self.target_index]

    def target_values(self) -> list[str]:
        return [r[self.target_index] or "" for r in self.cells]


@dataclass
class DatasetRecord:
    id: str
    table_path: str
    split: str = "train"  # "train" | "test"
    description: str = ""
    target_col: str | None = None  # None: last column
    meta: np.ndarray | None = None
    desc_embedding: np.ndarray | None = None
    best_label: PipelineLabel | None = None


@dataclass
class Catalog:
    records: dict[str, DatasetRecord] = field(default_factory=dict)
    vocabulary: PrimitiveVocabulary = field(default_factory=PrimitiveVocabulary)
    desc_width: int = 1024
    meta_names: list[str] | None = None
    doc_embeddings: object | None = None  # embedding.EmbeddingStore
    embedder: str = "hashed"  # "hashed" | "precomputed"

    def train_records(self) -> list[DatasetRecord]:
        return [r for r in self.records.values() if r.split == "train"]

    def test_records(self) -> list[DatasetRecord]:
        return [r for r in self.records.values() if r.split == "test"]


def load_manifest(path: str) -> Catalog:
    """Parse a tab-separated manifest into a catalog of unprocessed records.

    Line format: ``id  split  table_path  target_col  description_path`` with
    ``#`` comments; ``-`` means "default" for target_col / description_path.
    Paths are resolved relative to the manifest's directory.
    """
    base = os.path.dirname(os.path.abspath(path))
    cat = Catalog()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 5:
                raise CatalogError(
                    f"{path}:{lineno}: expected 5 tab-separated fields, got {len(parts)}"
                )
            did, split, table_path, target_col, desc_path = (p.strip() for p in parts)
            if split not in ("train", "test"):
                raise CatalogError(f"{path}:{lineno}: bad split {split!r}")
            if did in cat.records:
                raise CatalogError(f"{path}:{lineno}: duplicate dataset id {did!r}")
            table_path = os.path.normpath(os.path.join(base, table_path))
            description = ""
            if desc_path != "-":
                dp = os.path.normpath(os.path.join(base, desc_path))
                with open(dp, "r", encoding="utf-8") as dfh:
                    description = dfh.read().strip()
            cat.records[did] = DatasetRecord(
                id=did,
                table_path=table_path,
                split=split,
                description=description,
                target_col=None if target_col == "-" else target_col,
            )
    return cat


def unresolved_tables(cat: Catalog) -> list[str]:
    """Ids whose table files are missing on disk."""
    return [r.id for r in cat.records.values() if not os.path.exists(r.table_path)]


def _is_number(tok: str) -> bool:
    try:
        float(tok)
    except ValueError:
        return False
    return True


def load_table(path: str, target_col: str | None = None) -> DataTable:
    """Read a delimited text table (header row first; comma or tab delimited).

    Column kinds are inferred: numeric iff every non-missing cell parses as a
    number. The last column is the target unless ``target_col`` (a column name
    or 0-based index) overrides it.
    """
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.rstrip("\n").rstrip("\r") for ln in fh]
    lines = [ln for ln in lines if ln.strip()]
    if not lines:
        raise CatalogError(f"{path}: empty table file")
    delim = "\t" if "\t" in lines[0] else ","
    header = [c.strip() for c in lines[0].split(delim)]
    ncols = len(header)
    rows: list[list[str | None]] = []
    for i, ln in enumerate(lines[1:], start=2):
        parts = [c.strip() for c in ln.split(delim)]
        if len(parts) != ncols:
            raise CatalogError(f"{path}: row {i} has {len(parts)} cells, expected {ncols}")
        rows.append([None if p in MISSING_TOKENS else p for p in parts])

    if target_col is None:
        tgt = ncols - 1
    elif target_col in header:
        tgt = header.index(target_col)
    else:
        try:
            tgt = int(target_col)
        except ValueError:
            raise CatalogError(f"{path}: unknown target column {target_col!r}") from None
        if not 0 <= tgt < ncols:
            raise CatalogError(f"{path}: target column index {tgt} out of range")

    kinds = []
    for c in range(ncols):
        vals = [r[c] for r in rows if r[c] is not None]
        kinds.append("numeric" if vals and all(_is_number(v) for v in vals) else "categorical")

    classes = {r[tgt] for r in rows if r[tgt] is not None}
    if len(classes) < 2:
        raise CatalogError(f"{path}: fewer than 2 distinct target classes")
    return DataTable(columns=header, kinds=kinds, cells=rows, target_index=tgt)


def load_performance_records(path: str, vocab: PrimitiveVocabulary) -> list[PerformanceRecord]:
    """Parse ``dataset_id  source  feature_processor  estimator  accuracy`` lines."""
    out: list[PerformanceRecord] = []
    seen: set[tuple[str, str]] = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            parts = [p.strip() for p in line.split("\t")]
            if len(parts) != 5:
                raise CatalogError(f"{path}:{lineno}: expected 5 fields, got {len(parts)}")
            did, source, fp, est, acc_s = parts
            if source not in SOURCE_ORDER:
                raise CatalogError(f"{path}:{lineno}: bad source {source!r} (want O or S)")
            if (did, source) in seen:
                raise CatalogError(f"{path}:{lineno}: duplicate record for ({did}, {source})")
            seen.add((did, source))
            try:
                acc = float(acc_s)
            except ValueError:
                raise CatalogError(f"{path}:{lineno}: bad accuracy {acc_s!r}") from None
            if not 0.0 <= acc <= 1.0 or not math.isfinite(acc):
                raise CatalogError(f"{path}:{lineno}: accuracy {acc} outside [0, 1]")
            label = PipelineLabel(
                feature_processor=vocab.feature_processor_index(fp),
                estimator=vocab.estimator_index(est),
            )
            out.append(PerformanceRecord(did, source, label, acc))
    return out


def attach_labels(cat: Catalog, records: list[PerformanceRecord]) -> list[str]:
    """Assign each dataset's best pipeline from its performance records.

    Ties break by source order (O before S), then by lower estimator index.
    Returns the ids of train datasets left unlabeled (they are excluded from
    training by the trainer).
    """
    by_id: dict[str, list[PerformanceRecord]] = {}
    for rec in records:
        if rec.dataset_id not in cat.records:
            raise CatalogError(f"performance record for unknown dataset {rec.dataset_id!r}")
        rec.pipeline.validate(cat.vocabulary)
        by_id.setdefault(rec.dataset_id, []).append(rec)

    for did, recs in by_id.items():
        best = min(
            recs,
            key=lambda r: (
                -r.accuracy,
                SOURCE_ORDER[r.source],
                r.pipeline.estimator,
                r.pipeline.feature_processor,
            ),
        )
        cat.records[did].best_label = best.pipeline

    return [r.id for r in cat.train_records() if r.best_label is None]


def _opt_vec_line(key: str, v: np.ndarray | None) -> str:
    return f"{key} -" if v is None else f"{key} {vec_to_hex(v)}"


def save_catalog(cat: Catalog, path: str) -> None:
    """Write the catalog as a versioned text document (bit-exact vectors)."""
    lines = [f"{CATALOG_MAGIC} {CATALOG_VERSION}"]
    lines.append(f"desc_width {cat.desc_width}")
    lines.append(f"embedder {cat.embedder}")
    lines.append("meta_names " + ("-" if cat.meta_names is None else "\t".join(cat.meta_names)))
    lines.append("fps " + "\t".join(cat.vocabulary.feature_processors))
    lines.append("ests " + "\t".join(cat.vocabulary.estimators))
    for name in cat.vocabulary.feature_processors + cat.vocabulary.estimators:
        lines.append(f"doc {name}\t{esc(cat.vocabulary.doc_text.get(name, ''))}")
    if cat.doc_embeddings is not None:
        store = cat.doc_embeddings
        lines.append(f"docemb_width {store.width}")
        for name in sorted(store.vectors):
            lines.append(f"docemb {name}\t{vec_to_hex(store.vectors[name])}")
    for rec in cat.records.values():
        lines.append(
            "dataset "
            + "\t".join(
                [
                    esc(rec.id),
                    rec.split,
                    esc(rec.table_path),
                    "-" if rec.target_col is None else esc(rec.target_col),
                    esc(rec.description),
                ]
            )
        )
        lines.append(_opt_vec_line("meta", rec.meta))
        lines.append(_opt_vec_line("desc", rec.desc_embedding))
        if rec.best_label is None:
            lines.append("label -")
        else:
            lines.append(f"label {rec.best_label.feature_processor} {rec.best_label.estimator}")
    lines.append("end")
    atomic_write_text(path, "\n".join(lines) + "\n")


def load_catalog(path: str) -> Catalog:
    from .embedding import EmbeddingStore  # late import: embedding imports catalog

    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise CatalogError(f"{path}: empty catalog file")
    magic = lines[0].split()
    if len(magic) != 2 or magic[0] != CATALOG_MAGIC:
        raise CatalogError(f"{path}: not a catalog file (bad header {lines[0]!r})")
    if int(magic[1]) != CATALOG_VERSION:
        raise CatalogError(
            f"{path}: catalog version {magic[1]} unsupported (this build reads {CATALOG_VERSION})"
        )
    if lines[-1].strip() != "end":
        raise CatalogError(f"{path}: truncated catalog (missing end marker)")

    cat = Catalog()
    vocab_fps: list[str] = []
    vocab_ests: list[str] = []
    doc_text: dict[str, str] = {}
    doc_vecs: dict[str, np.ndarray] = {}
    docemb_width = 0
    cur: DatasetRecord | None = None

    for ln in lines[1:-1]:
        key, _, rest = ln.partition(" ")
        if key == "desc_width":
            cat.desc_width = int(rest)
        elif key == "embedder":
            cat.embedder = rest.strip()
        elif key == "meta_names":
            cat.meta_names = None if rest == "-" else rest.split("\t")
        elif key == "fps":
            vocab_fps = rest.split("\t")
        elif key == "ests":
            vocab_ests = rest.split("\t")
        elif key == "doc":
            name, _, text = rest.partition("\t")
            doc_text[name] = unesc(text)
        elif key == "docemb_width":
            docemb_width = int(rest)
        elif key == "docemb":
            name, _, hexes = rest.partition("\t")
            doc_vecs[name] = vec_from_hex(hexes)
        elif key == "dataset":
            parts = rest.split("\t")
            if len(parts) != 5:
                raise CatalogError(f"{path}: malformed dataset line")
            cur = DatasetRecord(
                id=unesc(parts[0]),
                split=parts[1],
                table_path=unesc(parts[2]),
                target_col=None if parts[3] == "-" else unesc(parts[3]),
                description=unesc(parts[4]),
            )
            if cur.id in cat.records:
                raise CatalogError(f"{path}: duplicate dataset id {cur.id!r}")
            cat.records[cur.id] = cur
        elif key in ("meta", "desc"):
            if cur is None:
                raise CatalogError(f"{path}: {key} line outside a dataset block")
            vec = None if rest == "-" else vec_from_hex(rest)
            if key == "meta":
                cur.meta = vec
            else:
                cur.desc_embedding = vec
        elif key == "label":
            if cur is None:
                raise CatalogError(f"{path}: label line outside a dataset block")
            if rest != "-":
                fp_s, est_s = rest.split()
                cur.best_label = PipelineLabel(int(fp_s), int(est_s))
        else:
            raise CatalogError(f"{path}: unknown catalog line key {key!r}")

    cat.vocabulary = PrimitiveVocabulary(
        estimators=vocab_ests or list(DEFAULT_ESTIMATORS),
        feature_processors=vocab_fps or list(DEFAULT_FEATURE_PROCESSORS),
        doc_text=doc_text or dict(DEFAULT_DOC_TEXT),
    )
    if doc_vecs:
        cat.doc_embeddings = EmbeddingStore(
            width=docemb_width, vectors=doc_vecs, provenance=cat.embedder
        )
    for rec in cat.records.values():
        if rec.best_label is not None:
            rec.best_label.validate(cat.vocabulary)
        if rec.desc_embedding is not None and rec.desc_embedding.size != cat.desc_width:
            raise CatalogError(
                f"{path}: dataset {rec.id!r} embedding width {rec.desc_embedding.size} "
                f"!= declared {cat.desc_width}"
            )
    return cat
