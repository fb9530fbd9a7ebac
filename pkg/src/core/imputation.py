"""
Imputation - Single mean/mode imputation (explicit opt-in only)
"""

import numpy as np

from src.core.dataset import Dataset
from src.core.schema import Kind
from src.errors import AllMissingColumn


def simple_impute(dataset: Dataset) -> Dataset:
    """
    Fill missing cells: continuous with the observed mean, binary/categorical
    with the observed mode (ties go to the earlier declared level).

    The input dataset is left untouched.

    Raises:
        AllMissingColumn: If a column with missing cells has no observed value
    """
    if dataset.is_complete:
        return dataset

    filled = {}
    for spec in dataset.schema.variables:
        missing = dataset.missing[spec.name].to_numpy()
        if not missing.any():
            continue
        values = dataset.column(spec.name)
        observed = values[~missing]
        if len(observed) == 0:
            raise AllMissingColumn(f"{spec.name}: no observed value to impute from")

        if spec.kind == Kind.CONTINUOUS:
            fill = float(np.mean(observed.astype(float)))
        else:
            order = [0.0, 1.0] if spec.kind == Kind.BINARY else list(spec.levels)
            counts = [int(np.sum(observed == level)) for level in order]
            fill = order[int(np.argmax(counts))]

        values[missing] = fill
        filled[spec.name] = values

    return dataset.replace_columns(filled)
