"""Shared test helpers: in-memory tables, toy catalogs, and the synthetic
multi-cluster universe used by the trainer and acceptance tests."""

from __future__ import annotations

import numpy as np
import pytest

from zsautoml.catalog import (
    Catalog,
    DatasetRecord,
    DataTable,
    PipelineLabel,
    PrimitiveVocabulary,
)
from zsautoml.embedding import build_doc_store, hash_embed
from zsautoml.metafeatures import METAFEATURE_NAMES, META_WIDTH, compute_metafeatures
from zsautoml.model import ModelConfig

# One distinct (feature processor, estimator) pair per latent cluster.
CLUSTER_LABELS = [(0, 2), (5, 0), (9, 13), (13, 17)]

CLUSTER_WORDS = [
    "finance credit loan bank risk transaction account currency fraud ledger".split(),
    "medical patient clinical diagnosis symptom hospital treatment drug dosage trial".split(),
    "image pixel texture brightness contrast edge segmentation camera lens exposure".split(),
    "sensor telemetry voltage frequency vibration turbine actuator signal drift calibration".split(),
]


def make_datatable(
    rng: np.random.Generator,
    n_rows: int = 30,
    n_numeric: int = 3,
    n_categorical: int = 1,
    n_classes: int = 2,
    mean: float = 0.0,
    scale: float = 1.0,
) -> DataTable:
    columns = (
        [f"num{i}" for i in range(n_numeric)]
        + [f"cat{i}" for i in range(n_categorical)]
        + ["target"]
    )
    kinds = ["numeric"] * n_numeric + ["categorical"] * (n_categorical + 1)
    cells = []
    for r in range(n_rows):
        row = [f"{rng.normal(mean, scale):.6f}" for _ in range(n_numeric)]
        row += [f"v{rng.integers(3)}" for _ in range(n_categorical)]
        row.append(f"c{r % n_classes}")
        cells.append(row)
    return DataTable(columns=columns, kinds=kinds, cells=cells, target_index=len(columns) - 1)


def cluster_table(rng: np.random.Generator, cluster: int) -> DataTable:
    """Tables whose statistics separate the four latent clusters."""
    return make_datatable(
        rng,
        n_rows=int(rng.integers(30, 60)),
        n_numeric=4,
        n_categorical=1,
        n_classes=cluster + 2,
        mean=[-10.0, 0.0, 10.0, 25.0][cluster],
        scale=[0.5, 1.0, 3.0, 8.0][cluster],
    )


def synthetic_universe(
    n_train: int = 120, n_test: int = 30, d_desc: int = 32, seed: int = 7
) -> Catalog:
    """n_train + n_test datasets in 4 latent clusters, each mapped to one label."""
    rng = np.random.default_rng(seed)
    vocab = PrimitiveVocabulary()
    cat = Catalog(vocabulary=vocab, desc_width=d_desc, meta_names=list(METAFEATURE_NAMES))
    cat.doc_embeddings = build_doc_store(vocab, d_desc, seed=0)
    for i in range(n_train + n_test):
        c = i % 4
        rec = DatasetRecord(
            id=f"syn{i:03d}",
            table_path="",
            split="train" if i < n_train else "test",
        )
        table = cluster_table(rng, c)
        rec.meta = compute_metafeatures(table, rec.id).values
        words = rng.choice(CLUSTER_WORDS[c], size=20)
        rec.description = " ".join(words.tolist())
        rec.desc_embedding = hash_embed(rec.description, d_desc, 0)
        rec.best_label = PipelineLabel(*CLUSTER_LABELS[c])
        cat.records[rec.id] = rec
    return cat


def synthetic_model_config(d_desc: int = 32, **overrides) -> ModelConfig:
    kwargs = dict(
        d_meta=len(METAFEATURE_NAMES),
        d_desc=d_desc,
        d_fused=32,
        d_node=32,
        gat_hidden=32,
        k_neighbors=20,
    )
    kwargs.update(overrides)
    return ModelConfig(**kwargs)


def toy_catalog(
    n_train: int = 4,
    n_test: int = 2,
    d_meta: int | None = 8,
    d_desc: int = 8,
    n_fps: int = 5,
    n_ests: int = 6,
    seed: int = 3,
) -> Catalog:
    """A small catalog with a reduced vocabulary for fast low-width tests.

    ``d_meta`` picks the meta-feature width: an integer gives random vectors
    of that width, ``None`` computes real meta-features from generated tables.
    """
    rng = np.random.default_rng(seed)
    real_meta = d_meta is None
    if real_meta:
        d_meta = META_WIDTH
    fps = [f"proc{i}" for i in range(n_fps)]
    ests = [f"est{i}" for i in range(n_ests)]
    docs = {name: f"documentation text for primitive {name}" for name in fps + ests}
    vocab = PrimitiveVocabulary(estimators=ests, feature_processors=fps, doc_text=docs)
    meta_names = list(METAFEATURE_NAMES) if real_meta else [f"m{i}" for i in range(d_meta)]
    cat = Catalog(vocabulary=vocab, desc_width=d_desc, meta_names=meta_names)
    cat.doc_embeddings = build_doc_store(vocab, d_desc, seed=0)
    for i in range(n_train + n_test):
        rec = DatasetRecord(
            id=f"toy{i}",
            table_path="",
            split="train" if i < n_train else "test",
            description=f"toy dataset number {i} with some words",
        )
        if real_meta:
            table = make_datatable(rng, n_rows=20, mean=float(i), scale=1.0 + 0.5 * i)
            rec.meta = compute_metafeatures(table, rec.id).values
        else:
            rec.meta = rng.normal(size=d_meta)
        rec.desc_embedding = hash_embed(rec.description, d_desc, 0)
        rec.best_label = PipelineLabel(int(rng.integers(n_fps)), int(rng.integers(n_ests)))
        cat.records[rec.id] = rec
    return cat


def toy_model_config(d_meta: int = 8, d_desc: int = 8, n_fps: int = 5, n_ests: int = 6,
                     **overrides) -> ModelConfig:
    kwargs = dict(
        d_meta=d_meta,
        d_desc=d_desc,
        d_fused=8,
        d_node=8,
        gat_hidden=8,
        n_feature_processors=n_fps,
        n_estimators=n_ests,
        k_neighbors=2,
    )
    kwargs.update(overrides)
    return ModelConfig(**kwargs)


def write_csv(path, header: list[str], rows: list[list[str]]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(row) + "\n")


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)
