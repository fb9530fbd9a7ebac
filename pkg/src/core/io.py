"""
Dataset I/O - CSV reading and writing against a schema

CSV: UTF-8, comma-delimited, header row equal to the schema names.
Missing tokens are the empty string and "NA" (any case).
"""

from pathlib import Path
from typing import Union

import numpy as np
import pandas as pd

from src.core.dataset import Dataset
from src.core.schema import Kind, Role, SfmSchema
from src.errors import DataFormatError, SchemaMismatch

MISSING_TOKENS = {"", "na"}


def _is_missing(token: str) -> bool:
    return token.strip().lower() in MISSING_TOKENS


def _parse_numeric(name: str, tokens, labels=None) -> np.ndarray:
    out = np.empty(len(tokens), dtype=float)
    for row, token in enumerate(tokens):
        if _is_missing(token):
            out[row] = np.nan
            continue
        text = token.strip()
        if labels is not None and text in labels:
            out[row] = labels[text]
            continue
        try:
            out[row] = float(text)
        except ValueError:
            raise DataFormatError(f"{name}[row {row}]: cannot parse {token!r} as a number") from None
    return out


def read_dataset_csv(path: Union[str, Path], schema: SfmSchema) -> Dataset:
    """
    Read a CSV file into a Dataset.

    Header names must equal the schema names as a set; columns are matched by
    name, so their order in the file is free. The protected column accepts 0/1
    or the schema's x0/x1 labels.

    Raises:
        SchemaMismatch: If the header differs from the schema names
        DataFormatError: If a numeric cell cannot be parsed
    """
    path = Path(path)
    if not path.exists():
        raise DataFormatError(f"Data file not found: {path}")

    raw = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    header = list(raw.columns)
    if sorted(header) != sorted(schema.names):
        raise SchemaMismatch(
            f"CSV header {header} does not match schema names {schema.names}"
        )

    columns = {}
    for spec in schema.variables:
        tokens = raw[spec.name].tolist()
        if spec.kind == Kind.CATEGORICAL:
            columns[spec.name] = [None if _is_missing(t) else t.strip() for t in tokens]
        else:
            labels = None
            if spec.role == Role.PROTECTED:
                labels = {schema.x0_label: 0.0, schema.x1_label: 1.0}
            columns[spec.name] = _parse_numeric(spec.name, tokens, labels)

    return Dataset.from_columns(schema, columns)


def dataset_to_csv_text(dataset: Dataset) -> str:
    """CSV text of a Dataset (missing cells empty, floats at 17 significant digits)."""
    out = pd.DataFrame(index=range(dataset.n))
    for spec in dataset.schema.variables:
        values = dataset.column(spec.name)
        if spec.kind == Kind.CONTINUOUS:
            out[spec.name] = [("" if np.isnan(v) else format(v, ".17g")) for v in values]
        elif spec.kind == Kind.BINARY:
            out[spec.name] = [("" if np.isnan(v) else str(int(v))) for v in values]
        else:
            out[spec.name] = ["" if v is None else v for v in values]

    return out.to_csv(index=False, lineterminator="\n")


def write_dataset_csv(dataset: Dataset, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dataset_to_csv_text(dataset), encoding="utf-8")
    return path
