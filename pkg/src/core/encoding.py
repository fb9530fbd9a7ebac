"""
Encoding - Role-aware design matrices with reference-level dummy coding
"""

from dataclasses import dataclass, field
from typing import Dict, List, Sequence

import numpy as np

from src.core.dataset import Dataset
from src.core.schema import Kind, VariableSpec
from src.errors import MissingData


@dataclass(frozen=True)
class DesignMatrices:
    """
    Numeric design for one dataset.

    z_groups / w_groups map each source variable to its column indices so
    categoricals can be handled as blocks (balance, sensitivity benchmarks).
    """
    x: np.ndarray
    z: np.ndarray
    w: np.ndarray
    y: np.ndarray
    z_names: List[str]
    w_names: List[str]
    z_groups: Dict[str, List[int]] = field(default_factory=dict)
    w_groups: Dict[str, List[int]] = field(default_factory=dict)

    @property
    def wz(self) -> np.ndarray:
        """Mediators and confounders side by side (W first)."""
        return np.hstack([self.w, self.z])


def encode_block(dataset: Dataset, specs: Sequence[VariableSpec]):
    """
    Encode a list of variables into one float matrix.

    Returns:
        (matrix, column names, groups)
    """
    columns: List[np.ndarray] = []
    names: List[str] = []
    groups: Dict[str, List[int]] = {}

    for spec in specs:
        values = dataset.column(spec.name)
        start = len(names)
        if spec.kind == Kind.CATEGORICAL:
            for level in spec.dummy_levels:
                columns.append((values == level).astype(float))
                names.append(f"{spec.name}={level}")
        else:
            columns.append(values.astype(float))
            names.append(spec.name)
        groups[spec.name] = list(range(start, len(names)))

    matrix = np.column_stack(columns) if columns else np.zeros((dataset.n, 0))
    return matrix, names, groups


def encode(dataset: Dataset) -> DesignMatrices:
    """
    Build {X, Z, W, Y} design matrices.

    Categoricals with L levels give L-1 indicators (reference omitted); binary and
    continuous columns pass through. Column order follows schema order, then level order.

    Args:
        dataset: Valid, complete dataset

    Returns:
        DesignMatrices

    Raises:
        MissingData: If any cell is missing
    """
    if not dataset.is_complete:
        raise MissingData(dataset.missing_cells())

    schema = dataset.schema
    z, z_names, z_groups = encode_block(dataset, schema.confounders)
    w, w_names, w_groups = encode_block(dataset, schema.mediators)

    return DesignMatrices(
        x=dataset.protected_indicator(),
        z=z,
        w=w,
        y=dataset.outcome(),
        z_names=z_names,
        w_names=w_names,
        z_groups=z_groups,
        w_groups=w_groups,
    )
