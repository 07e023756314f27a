"""Shared data types: datasets, rankings, utility models, discovery results.

Everything here is treated as immutable after construction (numpy arrays are
not frozen but are never written to), so instances can be shared freely
across threads. Scoring is stateless.
"""

from __future__ import annotations

import csv
import enum
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from udisc.errors import DimensionMismatch, EmptyInput, NonFiniteInput


class ColumnKind(enum.Enum):
    NUMERIC = "numeric"
    TEXT = "text"


class Stage(enum.Enum):
    SYNTHETIC = "synthetic"
    REAL = "real"


@dataclass
class AttributeColumn:
    """A single typed column; exactly one of numeric_values/text_values is set."""

    name: str
    kind: ColumnKind
    numeric_values: np.ndarray | None = None
    text_values: list[str] | None = None
    missing_mask: np.ndarray | None = None

    def __post_init__(self):
        if self.kind is ColumnKind.NUMERIC:
            if self.numeric_values is None or self.text_values is not None:
                raise ValueError(f"numeric column {self.name!r} must carry numeric_values only")
            self.numeric_values = np.asarray(self.numeric_values, dtype=np.float64)
            n = len(self.numeric_values)
        else:
            if self.text_values is None or self.numeric_values is not None:
                raise ValueError(f"text column {self.name!r} must carry text_values only")
            n = len(self.text_values)
        if self.missing_mask is None:
            self.missing_mask = np.zeros(n, dtype=bool)
        else:
            self.missing_mask = np.asarray(self.missing_mask, dtype=bool)
        if len(self.missing_mask) != n:
            raise ValueError(f"missing_mask length {len(self.missing_mask)} != {n} in column {self.name!r}")

    def __len__(self) -> int:
        return len(self.missing_mask)


@dataclass
class Dataset:
    """Typed tabular container with stable integer tuple identities."""

    name: str
    columns: list[AttributeColumn]
    row_count: int
    tuple_ids: np.ndarray

    def __post_init__(self):
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise ValueError("column names must be unique")
        for c in self.columns:
            if len(c) != self.row_count:
                raise ValueError(f"column {c.name!r} has {len(c)} values, expected {self.row_count}")
        self.tuple_ids = np.asarray(self.tuple_ids, dtype=np.int64)
        if len(self.tuple_ids) != self.row_count or len(set(self.tuple_ids.tolist())) != self.row_count:
            raise ValueError("tuple_ids must be distinct and match row_count")

    def column(self, name: str) -> AttributeColumn:
        for c in self.columns:
            if c.name == name:
                return c
        raise KeyError(name)

    @property
    def column_names(self) -> list[str]:
        return [c.name for c in self.columns]

    def numeric_columns(self) -> list[AttributeColumn]:
        return [c for c in self.columns if c.kind is ColumnKind.NUMERIC]

    def text_columns(self) -> list[AttributeColumn]:
        return [c for c in self.columns if c.kind is ColumnKind.TEXT]

    def numeric_matrix(self) -> np.ndarray:
        """Row-major (row_count, n_numeric) view of the numeric columns, in column order."""
        cols = self.numeric_columns()
        if not cols:
            return np.zeros((self.row_count, 0))
        return np.column_stack([c.numeric_values for c in cols])


@dataclass(frozen=True)
class AttributeRanking:
    """Strict best-first ordering of all attributes plus derived rank weights."""

    order: tuple[str, ...]
    weights: dict[str, float]

    def __post_init__(self):
        ws = [self.weights[a] for a in self.order]
        if any(not (0.0 < w <= 1.0) for w in ws):
            raise ValueError("rank weights must lie in (0, 1]")
        if any(ws[i] <= ws[i + 1] for i in range(len(ws) - 1)):
            raise ValueError("rank weights must strictly decrease along the order")
        if abs(sum(ws) - 1.0) > 1e-9:
            raise ValueError(f"rank weights must sum to 1, got {sum(ws)}")


@dataclass
class UtilityModel:
    """Linear utility over numeric attributes and text-embedding dimensions.

    text_coeffs is keyed by (attribute name, embedding dimension index).
    The intercept carries the fitted residual term of whichever stage this is.
    A REAL-stage model must record the SYNTHETIC model it was refined from.
    """

    stage: Stage
    numeric_coeffs: dict[str, float]
    text_coeffs: dict[tuple[str, int], float]
    intercept: float
    training_sse: float
    provenance: "UtilityModel | None" = None

    def __post_init__(self):
        if self.training_sse < 0:
            raise ValueError("training_sse must be non-negative")
        if self.stage is Stage.REAL:
            if self.provenance is None or self.provenance.stage is not Stage.SYNTHETIC:
                raise ValueError("a REAL model must be constructed from a SYNTHETIC model")
        elif self.provenance is not None:
            raise ValueError("a SYNTHETIC model cannot have provenance")

    @property
    def numeric_attr_order(self) -> list[str]:
        return list(self.numeric_coeffs.keys())

    @property
    def text_key_order(self) -> list[tuple[str, int]]:
        return list(self.text_coeffs.keys())


@dataclass(frozen=True)
class ScoredTuple:
    tuple_id: int
    score: float


@dataclass
class DiscoveryResult:
    """Top-k selection, sorted by score descending with id-ascending tie-break."""

    selected: list[ScoredTuple]
    k: int
    model_stage: Stage

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be positive")
        for a, b in zip(self.selected, self.selected[1:]):
            if b.score > a.score or (b.score == a.score and b.tuple_id <= a.tuple_id):
                raise ValueError("selected must be sorted by (score desc, tuple_id asc)")

    def tuple_ids(self) -> list[int]:
        return [s.tuple_id for s in self.selected]

    def to_json(self) -> str:
        return json.dumps(
            {
                "k": self.k,
                "stage": self.model_stage.value,
                "selected": [{"tuple_id": s.tuple_id, "score": s.score} for s in self.selected],
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "DiscoveryResult":
        obj = json.loads(text)
        return cls(
            selected=[ScoredTuple(int(e["tuple_id"]), float(e["score"])) for e in obj["selected"]],
            k=int(obj["k"]),
            model_stage=Stage(obj["stage"]),
        )

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["tuple_id", "score"])
        for s in self.selected:
            writer.writerow([s.tuple_id, repr(s.score)])
        return buf.getvalue()


def score_tuple(model: UtilityModel, numeric_features, text_embeddings) -> float:
    """Evaluate the linear utility: dot(numeric) + dot(text) + intercept.

    Feature vectors must follow the model's coefficient order (numeric
    attributes in numeric_coeffs order; text features attribute-major,
    dimension-minor per text_coeffs order).
    """
    num = np.asarray(numeric_features, dtype=np.float64)
    txt = np.asarray(text_embeddings, dtype=np.float64)
    if num.shape != (len(model.numeric_coeffs),):
        raise DimensionMismatch(
            f"expected {len(model.numeric_coeffs)} numeric features, got {num.shape}"
        )
    if txt.shape != (len(model.text_coeffs),):
        raise DimensionMismatch(f"expected {len(model.text_coeffs)} text features, got {txt.shape}")
    if not (np.all(np.isfinite(num)) and np.all(np.isfinite(txt))):
        raise NonFiniteInput("features contain NaN or Inf")
    beta_num = np.fromiter(model.numeric_coeffs.values(), dtype=np.float64, count=len(model.numeric_coeffs))
    beta_txt = np.fromiter(model.text_coeffs.values(), dtype=np.float64, count=len(model.text_coeffs))
    return float(num @ beta_num + txt @ beta_txt + model.intercept)


def select_top_k(scores: list[ScoredTuple], k: int, stage: Stage = Stage.REAL) -> DiscoveryResult:
    """Pick the k highest-scoring tuples; boundary ties go to the lower tuple_id.

    For a linear utility with a pure cardinality constraint this attains the
    maximum subset score sum, so it realizes the subset argmax.
    """
    if not scores:
        raise EmptyInput("no scores to select from")
    if k < 1:
        raise ValueError("k must be positive")
    if any(not math.isfinite(s.score) for s in scores):
        raise NonFiniteInput("scores contain NaN or Inf")
    ranked = sorted(scores, key=lambda s: (-s.score, s.tuple_id))
    return DiscoveryResult(selected=ranked[: min(k, len(scores))], k=k, model_stage=stage)
