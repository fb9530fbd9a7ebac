"""
Validation - Diagnostic checks of Dataset invariants

validate() never raises; it reports every violation it finds.
"""

from dataclasses import dataclass
from typing import List

import numpy as np

from src.core.dataset import Dataset
from src.core.schema import Kind


@dataclass(frozen=True)
class Violation:
    variable: str
    row: int
    rule: str
    value: object = None

    def __str__(self) -> str:
        return f"{self.variable}[row {self.row}]: {self.rule} (value={self.value!r})"


def validate(dataset: Dataset) -> List[Violation]:
    """
    Check the Dataset invariants cell by cell.

    Missing cells are not violations; they are reported by the missingness mask.

    Args:
        dataset: Dataset to check

    Returns:
        Violations naming variable, row and rule (empty list if the dataset is valid)
    """
    violations: List[Violation] = []

    for spec in dataset.schema.variables:
        values = dataset.frame[spec.name].to_numpy()
        missing = dataset.missing[spec.name].to_numpy()

        if len(values) != dataset.n:
            violations.append(Violation(spec.name, -1, "column length differs from n", len(values)))
            continue

        if spec.kind == Kind.BINARY:
            bad = ~missing & ~np.isin(values, (0.0, 1.0))
            rule = "binary value outside {0,1}"
        elif spec.kind == Kind.CATEGORICAL:
            allowed = set(spec.levels)
            bad = np.array([not m and v not in allowed for v, m in zip(values, missing)], dtype=bool)
            rule = f"categorical value not in declared levels {list(spec.levels)}"
        else:
            bad = ~missing & ~np.isfinite(values.astype(float))
            rule = "continuous value not finite"

        for row in np.flatnonzero(bad):
            violations.append(Violation(spec.name, int(row), rule, values[row]))

    return violations
