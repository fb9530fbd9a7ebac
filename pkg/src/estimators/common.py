"""
Shared estimator pieces - point estimates with normal CIs and subgroup dimension checks
"""

import itertools
from dataclasses import dataclass
from typing import Dict, List, Tuple

import numpy as np
from scipy import stats

from src.core.dataset import Dataset
from src.core.schema import SfmSchema, VariableSpec
from src.errors import UnknownDimension

Z_975 = float(stats.norm.ppf(0.975))
SMALL_CELL = 30


@dataclass(frozen=True)
class Estimate:
    """Point estimate with standard error and a normal-based 95% interval."""
    estimate: float
    se: float

    @property
    def ci95(self) -> Tuple[float, float]:
        return (self.estimate - Z_975 * self.se, self.estimate + Z_975 * self.se)

    def to_dict(self) -> Dict[str, float]:
        lo, hi = self.ci95
        return {"estimate": self.estimate, "se": self.se, "ci95_lo": lo, "ci95_hi": hi}


def mean_estimate(values: np.ndarray) -> Estimate:
    """Sample mean with se = sd/sqrt(n) (sd with ddof=1; NaN for n < 2)."""
    values = np.asarray(values, dtype=float)
    n = len(values)
    if n == 0:
        return Estimate(np.nan, np.nan)
    se = float(np.std(values, ddof=1) / np.sqrt(n)) if n > 1 else np.nan
    return Estimate(float(np.mean(values)), se)


def check_dimension(schema: SfmSchema, name: str) -> VariableSpec:
    """
    Subgroup dimensions must be discrete confounders.

    Raises:
        UnknownDimension: Otherwise
    """
    if name not in schema:
        raise UnknownDimension(f"Unknown dimension {name!r}; schema has {schema.names}")
    spec = schema[name]
    if spec not in schema.confounders or not spec.is_discrete:
        raise UnknownDimension(f"Dimension {name!r} must be a binary or categorical confounder")
    return spec


def discrete_confounders(schema: SfmSchema) -> List[str]:
    return [s.name for s in schema.confounders if s.is_discrete]


def grouped_summary(values: np.ndarray, dataset: Dataset, dims: List[str],
                    label: str = "estimate") -> List[Dict]:
    """
    Mean, sd, se of the mean and n of values within every level combination of dims.

    Combinations with no rows are kept with n = 0 and NaN statistics.
    """
    specs = [check_dimension(dataset.schema, d) for d in dims]
    labels = [dataset.level_labels(d) for d in dims]
    values = np.asarray(values, dtype=float)

    rows = []
    for combo in itertools.product(*[s.domain() for s in specs]):
        mask = np.ones(dataset.n, dtype=bool)
        for column, level in zip(labels, combo):
            mask &= column == level
        cell = values[mask]
        n = int(mask.sum())
        est = mean_estimate(cell)
        row = {}
        for i, (dim, level) in enumerate(zip(dims, combo), start=1):
            suffix = "" if len(dims) == 1 else str(i)
            row[f"dimension{suffix}"] = dim
            row[f"level{suffix}"] = str(level)
        row.update({
            label: est.estimate,
            "sd": float(np.std(cell, ddof=1)) if n > 1 else np.nan,
            "se": est.se,
            "n": n,
            "small_flag": n < SMALL_CELL,
        })
        rows.append(row)
    return rows
