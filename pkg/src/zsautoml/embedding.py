"""Description and primitive-documentation embeddings.

Two providers share one exchange format: vectors precomputed by an external
text encoder (loaded from a ``ZSEMB`` file), and a deterministic hashing
embedder used as the self-contained fallback. Pipeline embeddings are the
concatenation of the feature-processor and estimator documentation vectors.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field

import numpy as np

from .catalog import CatalogError, PipelineLabel, PrimitiveVocabulary
from .serialize import atomic_write_text

EMBED_MAGIC = "ZSEMB"
EMBED_VERSION = 1

_TOKEN_SPLIT = re.compile(r"[^0-9a-z]+")


@dataclass
class EmbeddingStore:
    width: int = 1024
    vectors: dict[str, np.ndarray] = field(default_factory=dict)
    provenance: str = "hashed"  # "hashed" | "precomputed"

    def get(self, key: str) -> np.ndarray:
        try:
            return self.vectors[key]
        except KeyError:
            raise CatalogError(f"no embedding stored for {key!r}") from None

    def put(self, key: str, vec: np.ndarray) -> None:
        vec = np.asarray(vec, dtype=np.float64)
        if vec.size != self.width:
            raise CatalogError(
                f"embedding for {key!r} has width {vec.size}, store expects {self.width}"
            )
        self.vectors[key] = vec

    def __len__(self) -> int:
        return len(self.vectors)


def hash_embed(text: str, width: int, seed: int = 0) -> np.ndarray:
    """Deterministic bag-of-hashed-tokens embedding, scaled to unit norm.

    Tokens are lowercased alphanumeric runs; each contributes +-1 to one of
    ``width`` buckets, with bucket and sign taken from a seeded stable hash.
    Empty text (or width 0) gives the zero vector.
    """
    if width < 1:
        return np.zeros(0, dtype=np.float64)
    v = np.zeros(width, dtype=np.float64)
    for tok in _TOKEN_SPLIT.split(text.lower()):
        if not tok:
            continue
        digest = hashlib.blake2b(
            f"{seed}:{tok}".encode("utf-8"), digest_size=8
        ).digest()
        h = int.from_bytes(digest, "little")
        sign = 1.0 if h & 1 else -1.0
        v[(h >> 1) % width] += sign
    norm = float(np.linalg.norm(v))
    if norm > 0:
        v /= norm
    return v


def embed_pipeline(
    label: PipelineLabel, vocab: PrimitiveVocabulary, doc_store: EmbeddingStore
) -> np.ndarray:
    """Concatenate (feature-processor doc embedding, estimator doc embedding)."""
    fp_name, est_name = label.names(vocab)
    return np.concatenate([doc_store.get(fp_name), doc_store.get(est_name)])


def zero_pipeline_embedding(width: int) -> np.ndarray:
    """The mask vector used for training targets and all test nodes."""
    return np.zeros(2 * width, dtype=np.float64)


def build_doc_store(
    vocab: PrimitiveVocabulary, width: int, seed: int = 0
) -> EmbeddingStore:
    """Hash-embed every primitive's documentation text."""
    store = EmbeddingStore(width=width, provenance="hashed")
    for name in vocab.feature_processors + vocab.estimators:
        store.put(name, hash_embed(vocab.doc_text.get(name, name), width, seed))
    return store


def save_embeddings(store: EmbeddingStore, path: str) -> None:
    """Write the exchange format: header, then ``id <TAB> v1 v2 ...`` per record."""
    lines = [f"{EMBED_MAGIC} {EMBED_VERSION} {store.width}"]
    for key in sorted(store.vectors):
        vals = " ".join(repr(float(x)) for x in store.vectors[key])
        lines.append(f"{key}\t{vals}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def load_embeddings(path: str, expected_width: int | None = None) -> EmbeddingStore:
    """Load a ``ZSEMB`` file; ``#`` lines are metadata comments."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise CatalogError(f"{path}: empty embedding file")
    head = lines[0].split()
    if len(head) != 3 or head[0] != EMBED_MAGIC:
        raise CatalogError(f"{path}: not an embedding file (bad header {lines[0]!r})")
    if int(head[1]) != EMBED_VERSION:
        raise CatalogError(
            f"{path}: embedding version {head[1]} unsupported (this build reads {EMBED_VERSION})"
        )
    width = int(head[2])
    if expected_width is not None and width != expected_width:
        raise CatalogError(
            f"{path}: declared width {width} but {expected_width} expected"
        )
    store = EmbeddingStore(width=width, provenance="precomputed")
    for lineno, ln in enumerate(lines[1:], start=2):
        if not ln.strip() or ln.lstrip().startswith("#"):
            continue
        key, _, rest = ln.partition("\t")
        vec = np.array([float(t) for t in rest.split()], dtype=np.float64)
        if vec.size != width:
            raise CatalogError(
                f"{path}:{lineno}: id {key!r} has {vec.size} values, expected {width}"
            )
        if not np.all(np.isfinite(vec)):
            raise CatalogError(f"{path}:{lineno}: non-finite value for id {key!r}")
        if key in store.vectors:
            raise CatalogError(f"{path}:{lineno}: duplicate id {key!r}")
        store.vectors[key] = vec
    return store
