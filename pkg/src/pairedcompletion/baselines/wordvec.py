"""Pooled pre-trained word vectors (fastText ``.vec`` text format) and endpoint embeddings."""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from ..providers.base import Provider
from .tfidf import tokenize


def load_word_vectors(path: str | Path, limit: int | None = None) -> dict[str, np.ndarray]:
    """Read ``count dim`` header then ``token v1 ... vdim`` lines."""
    table: dict[str, np.ndarray] = {}
    with Path(path).open(encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise ValueError(f"{path}: first line must be 'count dim'")
        dim = int(header[1])
        for lineno, line in enumerate(fh, start=2):
            parts = line.rstrip("\n").rstrip().split(" ")
            if len(parts) < 2:
                continue
            if len(parts) - 1 != dim:
                raise ValueError(f"{path}:{lineno}: expected {dim} components, got {len(parts) - 1}")
            table[parts[0]] = np.asarray(parts[1:], dtype=float)
            if limit is not None and len(table) >= limit:
                break
    if not table:
        raise ValueError(f"{path}: no vectors")
    return table


def pool_word_vectors(text: str, table: Mapping[str, np.ndarray]) -> np.ndarray:
    if not table:
        raise ValueError("word-vector table is empty")
    dim = len(next(iter(table.values())))
    hits = [table[t] for t in tokenize(text) if t in table]
    if not hits:
        return np.zeros(dim)
    return np.mean(hits, axis=0)


def fetch_embeddings(texts: Sequence[str], provider: Provider) -> list[np.ndarray]:
    vectors = [np.asarray(v, dtype=float) for v in provider.embed(list(texts))]
    if len(vectors) != len(texts):
        raise ValueError(f"provider returned {len(vectors)} embeddings for {len(texts)} texts")
    dims = {len(v) for v in vectors}
    if len(dims) > 1:
        raise ValueError(f"inconsistent embedding dimensions: {sorted(dims)}")
    if vectors and not all(np.all(np.isfinite(v)) for v in vectors):
        raise ValueError("embedding contains non-finite components")
    return vectors
