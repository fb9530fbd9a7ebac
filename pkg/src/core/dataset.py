"""
Dataset - Role-tagged tabular data with a missingness mask

Binary and continuous columns are float arrays (NaN = missing); categorical
columns are object arrays of level labels (None = missing). A Dataset never
changes after construction: every transformation returns a new one.
"""

from dataclasses import dataclass
from typing import Dict, List, Mapping, Sequence, Tuple

import numpy as np
import pandas as pd

from src.core.schema import Kind, SfmSchema
from src.errors import SchemaMismatch


def _coerce(values, kind: Kind) -> np.ndarray:
    if kind == Kind.CATEGORICAL:
        out = np.empty(len(values), dtype=object)
        for i, v in enumerate(values):
            out[i] = None if v is None or (isinstance(v, float) and np.isnan(v)) else str(v)
        return out
    return np.asarray(values, dtype=float)


@dataclass(frozen=True)
class Dataset:
    """
    Tabular SFM data.

    Attributes:
        schema: Variable roles and kinds
        frame: One column per schema variable, in schema order
        missing: Boolean frame, True where the cell is missing
    """
    schema: SfmSchema
    frame: pd.DataFrame
    missing: pd.DataFrame

    @classmethod
    def from_columns(cls, schema: SfmSchema, columns: Mapping[str, Sequence]) -> "Dataset":
        """
        Build a dataset from per-variable value sequences.

        Raises:
            SchemaMismatch: If columns differ from the schema names or lengths differ
        """
        missing_names = [name for name in schema.names if name not in columns]
        extra_names = [name for name in columns if name not in schema]
        if missing_names or extra_names:
            raise SchemaMismatch(f"Columns do not match schema: missing {missing_names}, unexpected {extra_names}")

        lengths = {name: len(columns[name]) for name in schema.names}
        if len(set(lengths.values())) > 1:
            raise SchemaMismatch(f"All columns must have the same length, got {lengths}")

        data = {v.name: _coerce(columns[v.name], v.kind) for v in schema.variables}
        frame = pd.DataFrame(data, columns=schema.names)
        return cls(schema=schema, frame=frame, missing=frame.isna())

    # ==================== ACCESSORS ====================

    @property
    def n(self) -> int:
        return len(self.frame)

    def column(self, name: str) -> np.ndarray:
        """Copy of one column's values."""
        return self.frame[name].to_numpy(copy=True)

    def missing_cells(self) -> List[Tuple[str, int]]:
        """(variable, row) for every missing cell, in schema then row order."""
        cells = []
        for name in self.schema.names:
            rows = np.flatnonzero(self.missing[name].to_numpy())
            cells.extend((name, int(r)) for r in rows)
        return cells

    @property
    def is_complete(self) -> bool:
        return not bool(self.missing.to_numpy().any())

    def protected_indicator(self) -> np.ndarray:
        """X as an int array (1 for the comparison group x1)."""
        return self.column(self.schema.protected.name).astype(int)

    def outcome(self) -> np.ndarray:
        return self.column(self.schema.outcome.name).astype(float)

    def group_sizes(self) -> Tuple[int, int]:
        x = self.frame[self.schema.protected.name].to_numpy()
        return int(np.sum(x == 0)), int(np.sum(x == 1))

    def level_labels(self, name: str) -> np.ndarray:
        """Discrete column rendered as level labels ("0"/"1" for binary)."""
        spec = self.schema[name]
        values = self.column(name)
        if spec.kind == Kind.BINARY:
            return np.array([None if np.isnan(v) else str(int(v)) for v in values], dtype=object)
        return values

    # ==================== TRANSFORMS ====================

    def take(self, rows: Sequence[int]) -> "Dataset":
        """Row subset, renumbered from 0."""
        rows = np.asarray(rows, dtype=int)
        frame = self.frame.iloc[rows].reset_index(drop=True)
        return Dataset(schema=self.schema, frame=frame, missing=frame.isna())

    def replace_columns(self, columns: Dict[str, np.ndarray]) -> "Dataset":
        """New dataset with some columns swapped out."""
        data = {name: self.frame[name].to_numpy(copy=True) for name in self.schema.names}
        for name, values in columns.items():
            data[name] = _coerce(values, self.schema[name].kind)
        return Dataset.from_columns(self.schema, data)

    def equals(self, other: "Dataset") -> bool:
        return self.schema == other.schema and self.frame.equals(other.frame)
