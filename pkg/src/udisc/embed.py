"""Deterministic text-to-vector embedding via signed hashed character n-grams.

Stands in for an external language model behind a fixed contract: text in,
unit-norm dense vector out, bit-identical across platforms and runs. Any
adapter producing vectors of the configured dimension can replace it without
touching downstream modules.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from udisc.errors import KindMismatch
from udisc.types import AttributeColumn, ColumnKind

FNV64_OFFSET = 0xCBF29CE484222325
FNV64_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class EmbedderConfig:
    dim: int = 64
    ngram_min: int = 2
    ngram_max: int = 3
    lowercase: bool = True

    def __post_init__(self):
        if self.dim < 8:
            raise ValueError("dim must be >= 8")
        if not (1 <= self.ngram_min <= self.ngram_max):
            raise ValueError("need 1 <= ngram_min <= ngram_max")


@dataclass(frozen=True)
class TextEmbedding:
    """Unit-norm (or exactly zero, for empty text) vector for one cell."""

    vector: np.ndarray
    source_attribute: str
    tuple_id: int


def fnv1a64(data: bytes) -> int:
    """FNV-1a 64-bit hash; pure-integer so it is identical everywhere."""
    h = FNV64_OFFSET
    for b in data:
        h ^= b
        h = (h * FNV64_PRIME) & _MASK64
    return h


def _accumulate(text: str, config: EmbedderConfig) -> np.ndarray:
    if config.lowercase:
        text = text.lower()
    vec = np.zeros(config.dim, dtype=np.float64)
    for n in range(config.ngram_min, config.ngram_max + 1):
        for i in range(len(text) - n + 1):
            h = fnv1a64(text[i : i + n].encode("utf-8"))
            sign = 1.0 if (h >> 63) == 0 else -1.0
            vec[h % config.dim] += sign
    return vec


def embed(text: str, config: EmbedderConfig, source_attribute: str = "", tuple_id: int = -1) -> TextEmbedding:
    """Hash every character n-gram into a signed bucket, then L2-normalize.

    Text shorter than ngram_min (including "") produces the zero vector.
    """
    vec = _accumulate(text, config)
    norm = float(np.linalg.norm(vec))
    if norm > 0.0:
        vec = vec / norm
    return TextEmbedding(vector=vec, source_attribute=source_attribute, tuple_id=tuple_id)


def embed_column(col: AttributeColumn, config: EmbedderConfig, tuple_ids=None) -> list[TextEmbedding]:
    """One embedding per row, aligned with the dataset's tuple ids."""
    if col.kind is not ColumnKind.TEXT:
        raise KindMismatch(f"column {col.name!r} is not a text column")
    ids = list(range(len(col))) if tuple_ids is None else list(tuple_ids)
    # Identical strings share one hashing pass; text columns are often low-cardinality.
    cache: dict[str, np.ndarray] = {}
    out = []
    for i, text in zip(ids, col.text_values):
        if text not in cache:
            cache[text] = embed(text, config).vector
        out.append(TextEmbedding(vector=cache[text], source_attribute=col.name, tuple_id=i))
    return out


def embedding_rows(embeddings: list[TextEmbedding]) -> np.ndarray:
    """Stack a column's embeddings into a (row_count, dim) matrix."""
    return np.vstack([e.vector for e in embeddings])
