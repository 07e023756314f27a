"""CSV loading, column-kind inference, and data validity enforcement.

A column is Numeric iff every non-missing value in the inference sample
parses as a float, else Text. clean() makes a dataset satisfy the engine's
validity assumptions on dirty input: exact duplicates dropped, missing
numerics mean-imputed, missing text replaced by the empty string.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from udisc.errors import (
    AllMissingColumn,
    EmptyFile,
    LabelNotNumeric,
    ParseError,
    UnknownAttribute,
)
from udisc.types import AttributeColumn, ColumnKind, Dataset

DEFAULT_MISSING_TOKENS = frozenset({"", "NA", "NaN", "null"})


@dataclass(frozen=True)
class IngestConfig:
    delimiter: str = ","
    has_header: bool = True
    label_column: str | None = None
    type_inference_sample: int | None = None  # None = all rows
    missing_tokens: frozenset[str] = DEFAULT_MISSING_TOKENS

    def __post_init__(self):
        if len(self.delimiter) != 1 or self.delimiter in {'"', "\n", "\r"}:
            raise ValueError("delimiter must be a single non-quote, non-newline character")
        if self.type_inference_sample is not None and self.type_inference_sample < 1:
            raise ValueError("type_inference_sample must be positive")


@dataclass
class LabeledDataset:
    """Dataset plus optional observed utility scores and source-row provenance."""

    dataset: Dataset
    labels: np.ndarray | None = None
    source_rows: list[int] | None = None

    def __post_init__(self):
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.float64)
            if len(self.labels) != self.dataset.row_count:
                raise ValueError("labels length must equal row_count")
            if not np.all(np.isfinite(self.labels)):
                raise ValueError("labels must be finite")


def _parse_float(cell: str) -> float | None:
    try:
        return float(cell)
    except ValueError:
        return None


def load_csv(path: str | Path, config: IngestConfig = IngestConfig()) -> LabeledDataset:
    """Parse an RFC 4180 CSV file into a typed LabeledDataset.

    Raises EmptyFile on headerless-empty input, ParseError with row/column
    location on ragged rows or values that contradict the inferred type, and
    LabelNotNumeric if the label column has a non-numeric or missing entry.
    """
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh, delimiter=config.delimiter))
    if not rows:
        raise EmptyFile(f"{path} is empty")

    if config.has_header:
        header = rows[0]
        data = rows[1:]
    else:
        header = [f"col{i}" for i in range(len(rows[0]))]
        data = rows
    if len(set(header)) != len(header):
        raise ParseError("duplicate column names in header", row=0)

    width = len(header)
    # csv yields [] for a blank line; read it as a row of all-missing fields
    data = [row if row else [""] * width for row in data]
    for r, row in enumerate(data):
        if len(row) != width:
            raise ParseError(f"expected {width} fields, got {len(row)}", row=r)

    n = len(data)
    sample = n if config.type_inference_sample is None else min(config.type_inference_sample, n)

    columns: list[AttributeColumn] = []
    labels: np.ndarray | None = None
    for c, name in enumerate(header):
        cells = [row[c] for row in data]
        missing = [cell in config.missing_tokens for cell in cells]
        is_numeric = all(
            missing[r] or _parse_float(cells[r]) is not None for r in range(sample)
        )
        if name == config.label_column:
            vals = np.empty(n)
            for r, cell in enumerate(cells):
                v = None if missing[r] else _parse_float(cell)
                if v is None or not math.isfinite(v):
                    raise LabelNotNumeric(f"label {name!r} not numeric at row {r}: {cell!r}")
                vals[r] = v
            labels = vals
            continue
        if is_numeric:
            vals = np.empty(n)
            for r, cell in enumerate(cells):
                if missing[r]:
                    vals[r] = np.nan
                    continue
                v = _parse_float(cell)
                if v is None:
                    raise ParseError(f"unparsable numeric value {cell!r}", row=r, col=name)
                vals[r] = v
            columns.append(
                AttributeColumn(name, ColumnKind.NUMERIC, numeric_values=vals,
                                missing_mask=np.array(missing))
            )
        else:
            columns.append(
                AttributeColumn(name, ColumnKind.TEXT,
                                text_values=["" if m else cell for cell, m in zip(cells, missing)],
                                missing_mask=np.array(missing))
            )

    if config.label_column is not None and labels is None:
        raise UnknownAttribute(f"label column {config.label_column!r} not found in {header}")

    ds = Dataset(name=path.stem, columns=columns, row_count=n, tuple_ids=np.arange(n))
    return LabeledDataset(dataset=ds, labels=labels)


def clean(lds: LabeledDataset, config: IngestConfig = IngestConfig()) -> LabeledDataset:
    """Impute missing values, then drop exact-duplicate rows (keeping the first).

    Imputation runs first so that rows made identical by it are still deduped,
    which is what makes clean idempotent. The returned dataset has a dense
    tuple_id range and remembers the surviving source row indices.
    """
    ds = lds.dataset
    n = ds.row_count

    imputed_cols = []
    for col in ds.columns:
        mask = col.missing_mask
        if col.kind is ColumnKind.NUMERIC:
            vals = col.numeric_values.copy()
            present = ~mask
            if not present.any():
                raise AllMissingColumn(f"numeric column {col.name!r} has no non-missing values")
            vals[mask] = vals[present].mean()
            imputed_cols.append((col.name, ColumnKind.NUMERIC, vals))
        else:
            texts = ["" if m else t for t, m in zip(col.text_values, mask)]
            imputed_cols.append((col.name, ColumnKind.TEXT, texts))

    seen = set()
    keep: list[int] = []
    for r in range(n):
        key = tuple(vals[r] for _, _, vals in imputed_cols)
        if lds.labels is not None:
            key += (lds.labels[r],)
        if key not in seen:
            seen.add(key)
            keep.append(r)

    columns = []
    for name, kind, vals in imputed_cols:
        if kind is ColumnKind.NUMERIC:
            columns.append(AttributeColumn(name, kind, numeric_values=np.asarray([vals[r] for r in keep])))
        else:
            columns.append(AttributeColumn(name, kind, text_values=[vals[r] for r in keep]))

    old_source = lds.source_rows if lds.source_rows is not None else list(range(n))
    out = Dataset(name=ds.name, columns=columns, row_count=len(keep), tuple_ids=np.arange(len(keep)))
    return LabeledDataset(
        dataset=out,
        labels=None if lds.labels is None else lds.labels[keep],
        source_rows=[old_source[r] for r in keep],
    )


def write_csv(lds: LabeledDataset, path: str | Path, config: IngestConfig = IngestConfig()) -> None:
    """Debug writer: inverse of load_csv for all non-missing values.

    Floats are written with repr() so they re-parse bit-exactly; missing
    entries are written as the empty string.
    """
    ds = lds.dataset
    header = list(ds.column_names)
    label_name = None
    if lds.labels is not None:
        label_name = config.label_column or "label"
        header.append(label_name)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, delimiter=config.delimiter, lineterminator="\n")
        writer.writerow(header)
        for r in range(ds.row_count):
            row = []
            for col in ds.columns:
                if col.missing_mask[r]:
                    row.append("")
                elif col.kind is ColumnKind.NUMERIC:
                    row.append(repr(float(col.numeric_values[r])))
                else:
                    row.append(col.text_values[r])
            if lds.labels is not None:
                row.append(repr(float(lds.labels[r])))
            writer.writerow(row)
