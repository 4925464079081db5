"""Shared text-serialization helpers: bit-exact float vectors, escaping, atomic writes."""

from __future__ import annotations

import os
import tempfile

import numpy as np


def vec_to_hex(v: np.ndarray) -> str:
    """Encode a float64 vector as space-separated C99 hex floats (bit round-trip)."""
    return " ".join(x.hex() for x in np.asarray(v, dtype=np.float64).ravel().tolist())


def vec_from_hex(s: str) -> np.ndarray:
    s = s.strip()
    if not s:
        return np.zeros(0, dtype=np.float64)
    return np.array([float.fromhex(tok) for tok in s.split()], dtype=np.float64)


def esc(s: str) -> str:
    return (
        s.replace("\\", "\\\\")
        .replace("\t", "\\t")
        .replace("\n", "\\n")
        .replace("\r", "\\r")
    )


def unesc(s: str) -> str:
    out = []
    i = 0
    while i < len(s):
        c = s[i]
        if c == "\\" and i + 1 < len(s):
            nxt = s[i + 1]
            out.append({"\\": "\\", "t": "\t", "n": "\n", "r": "\r"}.get(nxt, nxt))
            i += 2
        else:
            out.append(c)
            i += 1
    return "".join(out)


def atomic_write_text(path: str, text: str) -> None:
    """Write via a temp file in the same directory, then rename (no partial files)."""
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
