"""Rank weights and [0,1] attribute scaling.

The user ranking enters the pipeline twice: here as positionally decreasing
weights (used later to build synthetic labels), and nowhere else - the value
scaling itself is plain per-column min-max so that feature scale stays
independent of the coefficient estimation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from udisc.errors import DuplicateAttribute, NotAPermutation, UnknownAttribute
from udisc.types import AttributeColumn, AttributeRanking, ColumnKind, Dataset


@dataclass
class NormalizedDataset:
    """Dataset with numeric columns rescaled into [0,1] plus the scale used."""

    dataset: Dataset
    scale_params: dict[str, tuple[float, float]]
    ranking: AttributeRanking


def build_ranking(order: list[str], ds: Dataset) -> AttributeRanking:
    """Linear rank weights: position r of m gets (m - r + 1) / (m(m+1)/2)."""
    if len(set(order)) != len(order):
        dupes = sorted({a for a in order if order.count(a) > 1})
        raise DuplicateAttribute(f"ranking repeats attributes {dupes}")
    if set(order) != set(ds.column_names):
        missing = sorted(set(ds.column_names) - set(order))
        extra = sorted(set(order) - set(ds.column_names))
        raise NotAPermutation(f"ranking is not a permutation of columns (missing {missing}, extra {extra})")
    m = len(order)
    total = m * (m + 1) / 2
    weights = {a: (m - r) / total for r, a in enumerate(order)}
    return AttributeRanking(order=tuple(order), weights=weights)


def normalize(ds: Dataset, ranking: AttributeRanking) -> NormalizedDataset:
    """Min-max scale every numeric column; constant columns map to 0.5.

    Text columns pass through untouched (their scaling happens in embedding
    space). The per-column (min, max) is kept for scoring unseen tuples.
    """
    if set(ranking.order) != set(ds.column_names):
        raise NotAPermutation("ranking does not cover the dataset's columns")
    scale_params: dict[str, tuple[float, float]] = {}
    columns = []
    for col in ds.columns:
        if col.kind is ColumnKind.NUMERIC:
            lo = float(col.numeric_values.min())
            hi = float(col.numeric_values.max())
            scale_params[col.name] = (lo, hi)
            if hi > lo:
                vals = (col.numeric_values - lo) / (hi - lo)
            else:
                vals = np.full(len(col), 0.5)
            columns.append(AttributeColumn(col.name, col.kind, numeric_values=vals,
                                           missing_mask=col.missing_mask.copy()))
        else:
            columns.append(AttributeColumn(col.name, col.kind, text_values=list(col.text_values),
                                           missing_mask=col.missing_mask.copy()))
    out = Dataset(name=ds.name, columns=columns, row_count=ds.row_count, tuple_ids=ds.tuple_ids.copy())
    return NormalizedDataset(dataset=out, scale_params=scale_params, ranking=ranking)


def apply_scale(params: dict[str, tuple[float, float]], raw_tuple: dict[str, float]) -> np.ndarray:
    """Scale one unseen tuple with the stored (min, max), clamping to [0,1].

    Output follows the params order. Constant training columns map to 0.5.
    """
    extra = sorted(set(raw_tuple) - set(params))
    if extra:
        raise UnknownAttribute(f"tuple has attributes unknown to the scale: {extra}")
    out = np.empty(len(params))
    for i, (name, (lo, hi)) in enumerate(params.items()):
        if name not in raw_tuple:
            raise UnknownAttribute(f"tuple is missing attribute {name!r}")
        if hi > lo:
            out[i] = min(1.0, max(0.0, (raw_tuple[name] - lo) / (hi - lo)))
        else:
            out[i] = 0.5
    return out
