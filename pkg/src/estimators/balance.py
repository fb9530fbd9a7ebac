"""
Balance - Standardized mean differences between the protected groups

SMDs divide the group-mean gap by the root of the unweighted average of the
two group variances. Categoricals get one row per level (reference included),
binaries one row for level "1", continuous variables one mean (SD) row.
"""

import warnings
from dataclasses import dataclass
from typing import Dict, List, Optional

import numpy as np
import pandas as pd

from src.core.dataset import Dataset
from src.core.schema import Kind, VariableSpec
from src.errors import MissingData, ZeroSpreadWarning

FLAG_THRESHOLD = 0.10
COLUMNS = ["variable", "role", "level", "stat", "pct_or_mean0", "sd0", "pct_or_mean1", "sd1", "smd", "flagged"]


def _standardize(diff: float, pooled_var: float, label: str) -> float:
    if pooled_var > 0:
        return float(diff / np.sqrt(pooled_var))
    if diff == 0:
        return 0.0
    warnings.warn(f"{label}: both groups have zero spread but different means", ZeroSpreadWarning, stacklevel=3)
    return float(np.sign(diff) * np.inf)


def smd_continuous(mean1: float, sd1: float, mean0: float, sd0: float, label: str = "smd") -> float:
    """
    (mean1 - mean0) / sqrt((sd1^2 + sd0^2) / 2).

    Zero spread in both groups gives 0 for equal means, otherwise a signed
    infinity with a ZeroSpreadWarning.
    """
    return _standardize(mean1 - mean0, (sd1 ** 2 + sd0 ** 2) / 2.0, label)


def smd_binary_level(p1: float, p0: float, label: str = "smd") -> float:
    """(p1 - p0) / sqrt((p1 (1 - p1) + p0 (1 - p0)) / 2)."""
    return _standardize(p1 - p0, (p1 * (1 - p1) + p0 * (1 - p0)) / 2.0, label)


def is_flagged(smd: float) -> bool:
    return bool(abs(smd) > FLAG_THRESHOLD)


@dataclass(frozen=True)
class BalanceTable:
    """Table-1 style balance rows; pct_or_mean holds a percentage for indicator rows."""
    rows: pd.DataFrame
    n0: int
    n1: int

    @property
    def flagged(self) -> pd.DataFrame:
        return self.rows[self.rows["flagged"]]

    def smd(self, variable: str, level: Optional[str] = None) -> float:
        rows = self.rows[self.rows["variable"] == variable]
        if level is not None:
            rows = rows[rows["level"] == str(level)]
        return float(rows["smd"].iloc[0])

    def to_dict(self) -> Dict:
        return {"n0": self.n0, "n1": self.n1, "rows": self.rows.to_dict(orient="records")}


def _indicator_row(spec: VariableSpec, level: str, hit: np.ndarray, x: np.ndarray) -> Dict:
    p0 = float(np.mean(hit[x == 0]))
    p1 = float(np.mean(hit[x == 1]))
    smd = smd_binary_level(p1, p0, label=f"{spec.name}={level}")
    return {
        "variable": spec.name, "role": spec.role.value, "level": level, "stat": "pct",
        "pct_or_mean0": 100.0 * p0, "sd0": None, "pct_or_mean1": 100.0 * p1, "sd1": None,
        "smd": smd, "flagged": is_flagged(smd),
    }


def _continuous_row(spec: VariableSpec, values: np.ndarray, x: np.ndarray) -> Dict:
    g0, g1 = values[x == 0], values[x == 1]
    m0, m1 = float(np.mean(g0)), float(np.mean(g1))
    s0 = float(np.std(g0, ddof=1)) if len(g0) > 1 else 0.0
    s1 = float(np.std(g1, ddof=1)) if len(g1) > 1 else 0.0
    smd = smd_continuous(m1, s1, m0, s0, label=spec.name)
    return {
        "variable": spec.name, "role": spec.role.value, "level": None, "stat": "mean_sd",
        "pct_or_mean0": m0, "sd0": s0, "pct_or_mean1": m1, "sd1": s1,
        "smd": smd, "flagged": is_flagged(smd),
    }


def balance_table(dataset: Dataset) -> BalanceTable:
    """
    SMD of every confounder and mediator between X = x1 and X = x0.

    Raises:
        MissingData: If the dataset has missing cells
    """
    if not dataset.is_complete:
        raise MissingData(dataset.missing_cells())
    x = dataset.protected_indicator()
    n0, n1 = dataset.group_sizes()

    rows: List[Dict] = []
    for spec in [*dataset.schema.confounders, *dataset.schema.mediators]:
        if spec.kind == Kind.CONTINUOUS:
            rows.append(_continuous_row(spec, dataset.column(spec.name).astype(float), x))
        elif spec.kind == Kind.BINARY:
            rows.append(_indicator_row(spec, "1", dataset.column(spec.name) == 1, x))
        else:
            values = dataset.column(spec.name)
            rows.extend(_indicator_row(spec, level, values == level, x) for level in spec.levels)
    return BalanceTable(rows=pd.DataFrame(rows, columns=COLUMNS), n0=n0, n1=n1)


def format_balance(table: BalanceTable) -> str:
    """Aligned text rendering: mean (SD) or percentage per group, SMD with * when flagged."""
    lines = [
        f"{'variable':<28} {'group x0':>16} {'group x1':>16} {'SMD':>8}",
        f"{'':<28} {f'(n={table.n0})':>16} {f'(n={table.n1})':>16}",
    ]
    for row in table.rows.to_dict(orient="records"):
        name = row["variable"] if row["level"] is None else f"  {row['variable']}={row['level']}"
        if row["stat"] == "mean_sd":
            left = f"{row['pct_or_mean0']:.3f} ({row['sd0']:.2f})"
            right = f"{row['pct_or_mean1']:.3f} ({row['sd1']:.2f})"
        else:
            left = f"{row['pct_or_mean0']:.1f}%"
            right = f"{row['pct_or_mean1']:.1f}%"
        mark = "*" if row["flagged"] else ""
        lines.append(f"{name:<28} {left:>16} {right:>16} {row['smd']:>8.3f}{mark}")
    lines.append(f"* |SMD| > {FLAG_THRESHOLD:.2f}")
    return "\n".join(lines)
