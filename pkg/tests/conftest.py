import numpy as np
import pytest

from udisc.types import AttributeColumn, ColumnKind, Dataset


def make_dataset(numeric: dict[str, list[float]] | None = None,
                 text: dict[str, list[str]] | None = None,
                 name: str = "test") -> Dataset:
    """Small typed dataset from plain dicts; column order numeric-then-text."""
    numeric = numeric or {}
    text = text or {}
    columns = [AttributeColumn(k, ColumnKind.NUMERIC, numeric_values=np.asarray(v, dtype=float))
               for k, v in numeric.items()]
    columns += [AttributeColumn(k, ColumnKind.TEXT, text_values=list(v)) for k, v in text.items()]
    n = len(columns[0]) if columns else 0
    return Dataset(name=name, columns=columns, row_count=n, tuple_ids=np.arange(n))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
