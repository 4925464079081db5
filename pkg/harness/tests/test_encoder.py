"""Deterministic description encoding and the ZSEMB exchange format."""

import numpy as np
import pytest

from zsautoml.embedding import load_embeddings

from zsharness import HarnessConfig, HarnessError, embed_texts, write_embedding_file

TEXTS = [
    ("credit", "loan default risk for retail bank customers"),
    ("plants", "leaf measurements of three iris species"),
    ("empty", ""),
]


def test_vectors_have_configured_width_and_are_deterministic():
    cfg = HarnessConfig()
    first = embed_texts(TEXTS, cfg)
    second = embed_texts(TEXTS, cfg)
    assert set(first) == {"credit", "plants", "empty"}
    for key, vec in first.items():
        assert vec.shape == (1024,)
        assert np.array_equal(vec, second[key])


def test_nonempty_text_yields_unit_vector_empty_yields_zero():
    vecs = embed_texts(TEXTS, HarnessConfig())
    assert np.linalg.norm(vecs["credit"]) == pytest.approx(1.0)
    assert np.all(vecs["empty"] == 0.0)


def test_different_texts_yield_different_vectors():
    vecs = embed_texts(TEXTS, HarnessConfig())
    assert not np.array_equal(vecs["credit"], vecs["plants"])


def test_duplicate_ids_rejected():
    with pytest.raises(HarnessError, match="duplicate"):
        embed_texts([("a", "x"), ("a", "y")], HarnessConfig())


def test_unknown_encoder_rejected():
    with pytest.raises(HarnessError, match="unknown encoder"):
        embed_texts(TEXTS, HarnessConfig(encoder="word2vec"))


def test_zsemb_file_round_trips_bit_exactly_through_recommender_loader(tmp_path):
    cfg = HarnessConfig()
    vecs = embed_texts(TEXTS, cfg)
    path = tmp_path / "desc.zsemb"
    write_embedding_file(vecs, str(path), cfg)
    header = path.read_text().splitlines()[0]
    assert header == "ZSEMB 1 1024"
    store = load_embeddings(str(path), expected_width=1024)
    for key, vec in vecs.items():
        loaded = store.vectors[key]
        assert loaded.dtype == np.float64
        assert np.array_equal(loaded, vec)


def test_width_mismatch_rejected_on_write(tmp_path):
    cfg = HarnessConfig(embed_width=8)
    with pytest.raises(HarnessError, match="width"):
        write_embedding_file({"a": np.zeros(9)}, str(tmp_path / "x.zsemb"), cfg)
