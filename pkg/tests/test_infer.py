"""Recommendation for new datasets, latency benchmarking, and report tables."""

import numpy as np
import pytest

from zsautoml.infer import (
    InferenceSession,
    InferError,
    ReportRow,
    bench,
    emit_report,
    format_report,
    load_report_rows,
    recommend,
)
from zsautoml.model import ZeroShotModel
from zsautoml.trainer import TrainConfig, build_checkpoint, train

from conftest import make_datatable, toy_catalog, toy_model_config


def trained_checkpoint(seed=0, **cfg_overrides):
    cat = toy_catalog(n_train=6, n_test=2, seed=seed, d_meta=None)
    model = ZeroShotModel(toy_model_config(d_meta=42, **cfg_overrides), seed=seed)
    model, _, std = train(model, cat, TrainConfig(iterations=10, seed=seed))
    return build_checkpoint(model, cat, std, provenance={"hash_seed": 0}), cat


@pytest.fixture(scope="module")
def ckpt_and_cat():
    return trained_checkpoint()


def _new_table():
    return make_datatable(np.random.default_rng(42), n_rows=25)


def test_recommend_returns_valid_label(ckpt_and_cat):
    ckpt, cat = ckpt_and_cat
    rec = recommend(ckpt, _new_table(), "a brand new tabular dataset", "newds")
    assert rec.dataset_id == "newds"
    assert 0 <= rec.label.feature_processor < len(cat.vocabulary.feature_processors)
    assert 0 <= rec.label.estimator < len(cat.vocabulary.estimators)
    assert rec.feature_processor == cat.vocabulary.feature_processors[
        rec.label.feature_processor
    ]
    assert rec.estimator == cat.vocabulary.estimators[rec.label.estimator]
    assert abs(rec.distribution.p_feat.sum() - 1.0) < 1e-9
    assert abs(rec.distribution.p_est.sum() - 1.0) < 1e-9
    assert rec.ablation == "zero-shot"
    assert rec.embedder == "hashed"


def test_recommend_neighbors_subset_of_training_ids(ckpt_and_cat):
    ckpt, cat = ckpt_and_cat
    rec = recommend(ckpt, _new_table(), "words about the data")
    assert rec.neighbor_ids
    assert set(rec.neighbor_ids) <= set(ckpt.node_ids)
    k = min(ckpt.config.k_neighbors, len(ckpt.node_ids))
    assert len(rec.neighbor_ids) == k


def test_recommend_timings_populated(ckpt_and_cat):
    ckpt, _ = ckpt_and_cat
    rec = recommend(ckpt, _new_table(), "timed run")
    for key in ("metafeature_ms", "embed_ms", "attach_ms", "gnn_ms", "total_ms"):
        assert rec.timings[key] >= 0.0
    parts = sum(v for k, v in rec.timings.items() if k != "total_ms")
    assert rec.timings["total_ms"] >= parts - 1e-6


def test_recommend_is_deterministic(ckpt_and_cat):
    ckpt, _ = ckpt_and_cat
    table = _new_table()
    a = recommend(ckpt, table, "same inputs", "d")
    b = recommend(ckpt, table, "same inputs", "d")
    assert np.array_equal(a.distribution.p_feat, b.distribution.p_feat)
    assert np.array_equal(a.distribution.p_est, b.distribution.p_est)
    assert a.label == b.label


def test_recommend_accepts_precomputed_description_vector(ckpt_and_cat):
    ckpt, _ = ckpt_and_cat
    table = _new_table()
    from zsautoml.embedding import hash_embed

    v = hash_embed("same inputs", ckpt.config.d_desc, 0)
    via_text = recommend(ckpt, table, "same inputs")
    via_vec = recommend(ckpt, table, "", desc_vector=v)
    assert np.array_equal(via_text.distribution.p_est, via_vec.distribution.p_est)
    with pytest.raises(InferError):
        recommend(ckpt, table, "", desc_vector=np.zeros(3))


def test_recommend_requires_table_when_metafeatures_enabled(ckpt_and_cat):
    ckpt, _ = ckpt_and_cat
    with pytest.raises(InferError):
        recommend(ckpt, None, "no table supplied")


def test_session_reuse_matches_one_shot(ckpt_and_cat):
    ckpt, _ = ckpt_and_cat
    session = InferenceSession(ckpt)
    table = _new_table()
    a = session.recommend(table, "reused session")
    b = recommend(ckpt, table, "reused session")
    assert np.array_equal(a.distribution.p_feat, b.distribution.p_feat)
    # Base graph must be untouched by repeated attachment.
    before = [list(x) for x in session.base.adjacency]
    session.recommend(table, "again")
    assert session.base.adjacency == before


def test_incremental_forward_matches_full_pass(ckpt_and_cat):
    # recommend() splices cached base-graph rows around the query node; the
    # result must agree with running the whole extended graph through
    # gat_forward.
    ckpt, _ = ckpt_and_cat
    import zsautoml.autodiff as ad
    from zsautoml.graph import attach_test_node

    session = InferenceSession(ckpt)
    rng = np.random.default_rng(0)
    for trial in range(5):
        fused = rng.normal(size=ckpt.fused.shape[1])
        g_ext, new_idx = attach_test_node(
            session.base, fused, k=ckpt.config.k_neighbors
        )
        u_new = rng.normal(size=(1, ckpt.config.d_node))
        fast = session._gat_query_forward(u_new, g_ext.adjacency, new_idx)
        full = session.model.gat_forward(
            ad.constant(np.vstack([ckpt.node_features, u_new])), g_ext.adjacency
        ).value[new_idx]
        assert np.max(np.abs(fast - full)) < 1e-9


def test_no_description_checkpoint_end_to_end():
    # d_desc=0 means descriptions and pipeline embeddings are zero-width.
    cat = toy_catalog(n_train=6, n_test=2, seed=1, d_meta=None, d_desc=0)
    model = ZeroShotModel(toy_model_config(d_meta=42, d_desc=0), seed=1)
    model, _, std = train(model, cat, TrainConfig(iterations=5, seed=1))
    nd_ckpt = build_checkpoint(model, cat, std)
    rec = recommend(nd_ckpt, _new_table(), "description is ignored")
    assert rec.ablation == "no-description"


def test_only_description_checkpoint_end_to_end():
    cat = toy_catalog(n_train=6, n_test=2, seed=2, d_meta=0)
    model = ZeroShotModel(toy_model_config(d_meta=0), seed=2)
    model, _, std = train(model, cat, TrainConfig(iterations=5, seed=2))
    od_ckpt = build_checkpoint(model, cat, std)
    # No table needed when meta-features are disabled.
    rec = recommend(od_ckpt, None, "text is the only signal")
    assert rec.ablation == "only-description"


def test_bench_reports_phase_statistics(ckpt_and_cat):
    ckpt, _ = ckpt_and_cat
    summary = bench(ckpt, _new_table(), "benchmark text", trials=10)
    assert summary.trials == 10
    for phase in ("metafeature_ms", "embed_ms", "attach_ms", "gnn_ms", "total_ms"):
        st = summary.phases[phase]
        assert st.median_ms >= 0.0
        assert st.p95_ms >= st.median_ms - 1e-9
    with pytest.raises(InferError):
        bench(ckpt, _new_table(), "too few", trials=3)


def test_format_report_tsv_aggregates():
    rows = [
        ReportRow("a", 0.9, 1.0),
        ReportRow("b", 0.7, 3.0),
        ReportRow("c", 0.8, 2.0),
    ]
    text = format_report(rows, fmt="tsv", method="zero-shot")
    lines = text.strip().splitlines()
    assert lines[0] == "dataset\taccuracy\ttime_s"
    agg = lines[-1].split("\t")
    assert agg[0] == "zero-shot"
    # Median, Min, Max, Mean, Std, Median time
    assert [float(x) for x in agg[1:]] == pytest.approx(
        [0.8, 0.7, 0.9, 0.8, np.std([0.9, 0.7, 0.8]), 2.0], abs=1e-4
    )
    header = lines[-2].split("\t")
    assert header[1:] == ["Median", "Min", "Max", "Mean", "Std", "Median time (s)"]


def test_format_report_text_mode_and_errors():
    rows = [ReportRow("ds", 0.5, 1.0)]
    text = format_report(rows, fmt="text", method="no-description")
    assert "no-description" in text
    assert "Median" in text
    with pytest.raises(InferError):
        format_report([], fmt="tsv")
    with pytest.raises(InferError):
        format_report(rows, fmt="json")


def test_report_roundtrip(tmp_path):
    rows = [ReportRow("x", 0.25, 0.5), ReportRow("y", 0.75, 1.5)]
    path = tmp_path / "report.tsv"
    emit_report(rows, str(path), fmt="tsv", method="m")
    loaded = load_report_rows(str(path))
    assert [(r.dataset_id, r.accuracy, r.time_s) for r in loaded] == [
        ("x", 0.25, 0.5),
        ("y", 0.75, 1.5),
    ]
    empty = tmp_path / "empty.tsv"
    empty.write_text("# nothing here\n")
    with pytest.raises(InferError):
        load_report_rows(str(empty))
