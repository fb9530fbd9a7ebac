"""
ctf-DE - Counterfactual direct effect overall and by subgroup cell

Per-row pseudo-outcome psi = phi1 - phi0 with e0 = 1 - e1:

    phi1 = 1{x1} (odds0/e0) (y - mu1) + 1{x0} (mu1 - eta)/e0 + eta
    phi0 = 1{x0} (y - m0)/e0 + m0

At correct nuisances E[psi | Z=z] = ctf-DE(z), so cell means of psi estimate
the cell's counterfactual direct effect.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Union

import numpy as np
import pandas as pd

from src.core.dataset import Dataset
from src.errors import SchemaMismatch
from src.estimators.common import Estimate, check_dimension, grouped_summary, mean_estimate
from src.estimators.decomposition import flag_extreme
from src.nuisance.cross_fit import NuisanceFits


@dataclass(frozen=True)
class PseudoOutcomes:
    values: np.ndarray
    max_abs: float
    n_extreme: int
    clip_counts: Dict[str, int] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class CtfDeReport:
    """Overall estimate plus a (dim1 x dim2) cell table."""
    overall: Estimate
    dims: List[str]
    cells: pd.DataFrame
    diagnostics: Dict = field(default_factory=dict)

    def to_dict(self) -> Dict:
        return {
            "overall": self.overall.to_dict(),
            "dims": list(self.dims),
            "cells": self.cells.to_dict(orient="records"),
            "diagnostics": dict(self.diagnostics),
        }


def _values(psi: Union[PseudoOutcomes, np.ndarray]) -> np.ndarray:
    return np.asarray(psi.values if isinstance(psi, PseudoOutcomes) else psi, dtype=float)


def ctf_de_pseudo_outcomes(dataset: Dataset, fits: NuisanceFits) -> PseudoOutcomes:
    """
    Per-row ctf-DE pseudo-outcomes from out-of-fold, clipped nuisances.

    Warns with ExtremeWeightsWarning when a value sits more than 50 IQRs from the median.
    """
    if fits.n != dataset.n:
        raise SchemaMismatch(f"Nuisance fits cover {fits.n} rows, dataset has {dataset.n}")
    x = dataset.protected_indicator()
    y = dataset.outcome()
    g0, g1 = (x == 0).astype(float), (x == 1).astype(float)
    e0 = 1.0 - fits.e1

    phi1 = g1 * (fits.odds0 / e0) * (y - fits.mu1) + g0 * (fits.mu1 - fits.eta) / e0 + fits.eta
    phi0 = g0 * (y - fits.m0) / e0 + fits.m0
    psi = phi1 - phi0
    return PseudoOutcomes(
        values=psi,
        max_abs=float(np.max(np.abs(psi))),
        n_extreme=flag_extreme("ctf-DE", psi),
        clip_counts=dict(fits.clip_counts),
    )


def ctf_de_overall(psi: Union[PseudoOutcomes, np.ndarray]) -> Estimate:
    """mean(psi) with se sd(psi)/sqrt(n)."""
    return mean_estimate(_values(psi))


def _diagnostics(psi) -> Dict:
    if isinstance(psi, PseudoOutcomes):
        return {"max_abs_psi": psi.max_abs, "extreme_weights": psi.n_extreme, "clip_counts": psi.clip_counts}
    return {"max_abs_psi": float(np.max(np.abs(_values(psi))))}


def _with_ci(rows: List[Dict]) -> pd.DataFrame:
    for row in rows:
        lo, hi = Estimate(row["estimate"], row["se"]).ci95
        row["ci95_lo"], row["ci95_hi"] = lo, hi
    return pd.DataFrame(rows)


def ctf_de_by_cell(psi: Union[PseudoOutcomes, np.ndarray], dataset: Dataset, dim1: str, dim2: str) -> CtfDeReport:
    """
    ctf-DE within every (dim1, dim2) level combination.

    Empty cells are kept with n = 0 and no estimate; n < 30 sets small_flag.

    Raises:
        UnknownDimension: If a dimension is not a discrete confounder
    """
    values = _values(psi)
    check_dimension(dataset.schema, dim1)
    check_dimension(dataset.schema, dim2)
    cells = _with_ci(grouped_summary(values, dataset, [dim1, dim2]))
    return CtfDeReport(overall=ctf_de_overall(values), dims=[dim1, dim2], cells=cells, diagnostics=_diagnostics(psi))


def ctf_de_by_dimension(psi: Union[PseudoOutcomes, np.ndarray], dataset: Dataset, dim: str) -> pd.DataFrame:
    """One-way ctf-DE table over the levels of one discrete confounder."""
    return _with_ci(grouped_summary(_values(psi), dataset, [dim]))


def aggregate_cells(report: CtfDeReport, dataset: Dataset) -> Estimate:
    """
    P(cell | X=x0)-weighted average of cell estimates, with independent-cell se.

    Equals x-DE when the two dimensions span every confounder.
    """
    x = dataset.protected_indicator()
    labels = [dataset.level_labels(d) for d in report.dims]
    n0 = int(np.sum(x == 0))

    estimate, variance = 0.0, 0.0
    for _, cell in report.cells.iterrows():
        mask = (x == 0) & (labels[0] == cell["level1"]) & (labels[1] == cell["level2"])
        weight = mask.sum() / n0
        if weight == 0:
            continue
        estimate += weight * cell["estimate"]
        se = cell["se"] if np.isfinite(cell["se"]) else 0.0
        variance += weight ** 2 * se ** 2
    return Estimate(float(estimate), float(np.sqrt(variance)))


def build_ctf_de_report(psi: PseudoOutcomes, dataset: Dataset, heatmaps: List, subgroups: Optional[List[str]] = None) -> Dict:
    """Overall estimate, one-way tables and heatmap cells bundled for export."""
    out = {
        "overall": ctf_de_overall(psi),
        "subgroups": {d: ctf_de_by_dimension(psi, dataset, d) for d in (subgroups or [])},
        "heatmaps": {},
        "diagnostics": _diagnostics(psi),
    }
    for dim1, dim2 in heatmaps:
        report = ctf_de_by_cell(psi, dataset, dim1, dim2)
        out["heatmaps"][f"{dim1}__{dim2}"] = report
    return out
