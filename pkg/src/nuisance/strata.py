"""
Strata - Cell counts over (x, z, w) for discrete confounders and mediators
"""

from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np
import pandas as pd

from src.core.dataset import Dataset
from src.core.schema import VariableSpec
from src.errors import EmptyGroup, MissingData, SchemaError


@dataclass(frozen=True)
class StrataIndex:
    """
    Row-level stratum codes.

    z_labels[c] / w_labels[c] give the variable -> level mapping of code c.
    """
    x: np.ndarray
    y: np.ndarray
    z_code: np.ndarray
    w_code: np.ndarray
    z_labels: List[Dict[str, str]]
    w_labels: List[Dict[str, str]]

    @property
    def n_z(self) -> int:
        return len(self.z_labels)

    @property
    def n_w(self) -> int:
        return len(self.w_labels)

    def counts(self, rows: np.ndarray = None) -> Tuple[np.ndarray, np.ndarray]:
        """(count, outcome sum) arrays of shape (2, n_z, n_w), optionally over a row resample."""
        x, y, z, w = self.x, self.y, self.z_code, self.w_code
        if rows is not None:
            x, y, z, w = x[rows], y[rows], z[rows], w[rows]
        size = 2 * self.n_z * self.n_w
        flat = (x * self.n_z + z) * self.n_w + w
        cnt = np.bincount(flat, minlength=size).reshape(2, self.n_z, self.n_w)
        ysum = np.bincount(flat, weights=y, minlength=size).reshape(2, self.n_z, self.n_w)
        return cnt, ysum

    def describe_cell(self, x: int, z: int, w: int, x_labels: Sequence[str]) -> Dict[str, str]:
        cell = {"x": x_labels[x]}
        cell.update(self.z_labels[z])
        cell.update(self.w_labels[w])
        return cell


def _codes(dataset: Dataset, specs: Sequence[VariableSpec]):
    if not specs:
        return np.zeros(dataset.n, dtype=np.int64), [{}]
    names = [s.name for s in specs]
    labels = pd.DataFrame({name: dataset.level_labels(name) for name in names})
    codes = labels.groupby(names, sort=True).ngroup().to_numpy().astype(np.int64)
    _, first = np.unique(codes, return_index=True)
    return codes, [labels.iloc[i].to_dict() for i in first]


def strata_index(dataset: Dataset) -> StrataIndex:
    """
    Code every row by its confounder stratum and mediator configuration.

    Raises:
        SchemaError: If a confounder or mediator is continuous
        MissingData: If any cell is missing
    """
    schema = dataset.schema
    continuous = [s.name for s in schema.confounders + schema.mediators if not s.is_discrete]
    if continuous:
        raise SchemaError(f"Stratum estimators need discrete Z and W; continuous: {continuous}")
    if not dataset.is_complete:
        raise MissingData(dataset.missing_cells())

    z_code, z_labels = _codes(dataset, schema.confounders)
    w_code, w_labels = _codes(dataset, schema.mediators)
    return StrataIndex(
        x=dataset.protected_indicator(),
        y=dataset.outcome(),
        z_code=z_code,
        w_code=w_code,
        z_labels=z_labels,
        w_labels=w_labels,
    )


def cell_moments(cnt: np.ndarray, ysum: np.ndarray) -> Dict[str, np.ndarray]:
    """
    Cell means and conditional frequencies.

    Returns:
        mu (2, n_z, n_w) cell means (0 where empty), pw (2, n_z, n_w) P(w|x,z)
        (0 where the (x, z) stratum is empty), n_xz (2, n_z)
    """
    n_xz = cnt.sum(axis=2)
    if n_xz[0].sum() == 0 or n_xz[1].sum() == 0:
        raise EmptyGroup(f"Both protected groups need rows, got sizes {n_xz.sum(axis=1).tolist()}")
    with np.errstate(invalid="ignore", divide="ignore"):
        mu = np.where(cnt > 0, ysum / np.maximum(cnt, 1), 0.0)
        pw = np.where(n_xz[:, :, None] > 0, cnt / np.maximum(n_xz[:, :, None], 1), 0.0)
    return {"mu": mu, "pw": pw, "n_xz": n_xz}


def positivity_gaps(cnt: np.ndarray) -> np.ndarray:
    """(z, w) pairs observed under x0 with no x1 rows: the cells the plug-in functionals cannot fill."""
    return np.argwhere((cnt[0] > 0) & (cnt[1] == 0))


def plugin_functionals(cnt: np.ndarray, ysum: np.ndarray) -> Dict[str, float]:
    """
    E[Y|x0], E[Y|x1] and the two counterfactual means

        theta1 = sum_z P(z|x0) sum_w E[Y|x1,w,z] P(w|x0,z)
        theta2 = sum_z P(z|x0) sum_w E[Y|x1,w,z] P(w|x1,z)

    Callers must check positivity_gaps first.
    """
    moments = cell_moments(cnt, ysum)
    mu, pw, n_xz = moments["mu"], moments["pw"], moments["n_xz"]
    n0, n1 = n_xz[0].sum(), n_xz[1].sum()
    pz0 = n_xz[0] / n0
    return {
        "ey0": float(ysum[0].sum() / n0),
        "ey1": float(ysum[1].sum() / n1),
        "theta1": float(np.sum(pz0 * np.sum(mu[1] * pw[0], axis=1))),
        "theta2": float(np.sum(pz0 * np.sum(mu[1] * pw[1], axis=1))),
    }
