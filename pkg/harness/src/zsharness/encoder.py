"""Description encoders and the ZSEMB exchange-format writer.

Two encoders are available. The default "hash" encoder is a self-contained
deterministic token hasher, so the full loop runs offline and reproducibly.
Encoder names starting with "t5" load a pretrained model through the
`transformers` package and mean-pool the encoder's last hidden states; the
encoder identity is recorded in the output file as a comment either way.
"""

from __future__ import annotations

import hashlib
import re

import numpy as np

from .config import HarnessConfig, HarnessError

EXCHANGE_MAGIC = "ZSEMB"
EXCHANGE_VERSION = 1

_TOKENS = re.compile(r"[^0-9a-z]+")


def _hash_encode(text: str, width: int) -> np.ndarray:
    """Signed token hashing into a unit-norm float64 vector (empty text -> 0)."""
    vec = np.zeros(width, dtype=np.float64)
    for token in _TOKENS.split(text.lower()):
        if not token:
            continue
        digest = hashlib.sha256(token.encode("utf-8")).digest()
        bucket = int.from_bytes(digest[:8], "big") % width
        sign = 1.0 if digest[8] % 2 == 0 else -1.0
        vec[bucket] += sign
    norm = float(np.linalg.norm(vec))
    if norm > 0.0:
        vec /= norm
    return vec


def _t5_encode(texts: list[str], cfg: HarnessConfig) -> list[np.ndarray]:
    try:
        import torch
        from transformers import AutoTokenizer, T5EncoderModel
    except Exception as exc:  # pragma: no cover - depends on environment
        raise HarnessError(f"cannot load encoder {cfg.encoder!r}: {exc}") from exc
    try:
        tokenizer = AutoTokenizer.from_pretrained(cfg.encoder)
        model = T5EncoderModel.from_pretrained(cfg.encoder)
    except Exception as exc:  # pragma: no cover - depends on environment
        raise HarnessError(f"cannot load encoder {cfg.encoder!r}: {exc}") from exc
    model.eval()
    out: list[np.ndarray] = []
    with torch.no_grad():
        for text in texts:
            toks = tokenizer(
                text, truncation=True, max_length=cfg.max_tokens, return_tensors="pt"
            )
            hidden = model(**toks).last_hidden_state[0]
            pooled = hidden.mean(dim=0).double().numpy()
            if pooled.size != cfg.embed_width:
                raise HarnessError(
                    f"encoder {cfg.encoder!r} yields width {pooled.size}, "
                    f"config expects {cfg.embed_width}"
                )
            out.append(pooled)
    return out


def embed_texts(
    ids_and_texts: list[tuple[str, str]], cfg: HarnessConfig
) -> dict[str, np.ndarray]:
    """One deterministic cfg.embed_width vector per id."""
    cfg.validate()
    ids = [i for i, _ in ids_and_texts]
    if len(set(ids)) != len(ids):
        raise HarnessError("duplicate ids in embedding request")
    texts = [t for _, t in ids_and_texts]
    if cfg.encoder == "hash":
        vectors = [_hash_encode(t, cfg.embed_width) for t in texts]
    elif cfg.encoder.startswith("t5"):
        vectors = _t5_encode(texts, cfg)
    else:
        raise HarnessError(f"unknown encoder {cfg.encoder!r}")
    return dict(zip(ids, vectors))


def write_embedding_file(
    vectors: dict[str, np.ndarray], path: str, cfg: HarnessConfig
) -> None:
    """Write the ZSEMB exchange format; floats use repr so they round-trip
    bit-exactly through the text file."""
    widths = {v.size for v in vectors.values()}
    if widths and widths != {cfg.embed_width}:
        raise HarnessError(f"inconsistent vector widths {sorted(widths)}")
    lines = [f"{EXCHANGE_MAGIC} {EXCHANGE_VERSION} {cfg.embed_width}"]
    lines.append(f"# encoder: {cfg.encoder} (pooling={cfg.pooling})")
    for key in sorted(vectors):
        vals = " ".join(repr(float(x)) for x in vectors[key])
        lines.append(f"{key}\t{vals}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
