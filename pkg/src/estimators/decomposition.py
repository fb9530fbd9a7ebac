"""
Decomposition - TV = x-DE - x-IE - x-SE by plug-in and debiased estimation

All estimators reduce to four numbers computed from the same inputs:
E[Y|x0], E[Y|x1], theta1 = E[Y_{x1,W_{x0}} | x0] and theta2 = E[Y_{x1} | x0],
then x-DE = theta1 - E[Y|x0], x-IE = theta1 - theta2, x-SE = theta2 - E[Y|x1].
The identity with TV = E[Y|x1] - E[Y|x0] therefore holds by construction.
"""

import warnings
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Optional

import numpy as np

from src.core.dataset import Dataset
from src.errors import EmptyGroup, EmptyStratum, ExtremeWeightsWarning, SchemaMismatch
from src.estimators.common import Estimate
from src.nuisance.cross_fit import NuisanceFits
from src.nuisance.strata import plugin_functionals, positivity_gaps, strata_index

COMPONENTS = ("tv", "x_de", "x_ie", "x_se")
SHARE_GUARD = 1e-8
EXTREME_IQR_MULTIPLE = 50.0


class Estimator(str, Enum):
    PLUGIN_STRATA = "plugin_strata"
    PLUGIN_MODEL = "plugin_model"
    DEBIASED = "debiased"


@dataclass(frozen=True)
class DecompositionReport:
    """
    TV and its three components.

    Components are signed so that tv = x_de - x_ie - x_se; display_components
    flips the last two signs so that tv = direct + indirect + spurious.
    """
    tv: Estimate
    x_de: Estimate
    x_ie: Estimate
    x_se: Estimate
    estimator: Estimator
    n0: int
    n1: int
    diagnostics: Dict = field(default_factory=dict)

    def components(self) -> Dict[str, Estimate]:
        return {name: getattr(self, name) for name in COMPONENTS}

    @property
    def display_components(self) -> Dict[str, float]:
        return {
            "direct": self.x_de.estimate,
            "indirect": -self.x_ie.estimate,
            "spurious": -self.x_se.estimate,
        }

    @property
    def shares(self) -> Dict[str, Optional[float]]:
        """|component| / |tv|; None when |tv| < 1e-8."""
        tv = abs(self.tv.estimate)
        if tv < SHARE_GUARD:
            return {name: None for name in self.display_components}
        return {name: abs(value) / tv for name, value in self.display_components.items()}

    def to_dict(self) -> Dict:
        out = {"estimator": self.estimator.value, "n0": self.n0, "n1": self.n1}
        out.update({name: est.to_dict() for name, est in self.components().items()})
        out["display_components"] = self.display_components
        out["shares"] = self.shares
        out["diagnostics"] = dict(self.diagnostics)
        return out


def _components(ey0: float, ey1: float, theta1: float, theta2: float) -> Dict[str, float]:
    return {
        "tv": ey1 - ey0,
        "x_de": theta1 - ey0,
        "x_ie": theta1 - theta2,
        "x_se": theta2 - ey1,
    }


def _report(point: Dict[str, float], se: Dict[str, float], estimator: Estimator,
            n0: int, n1: int, diagnostics: Dict) -> DecompositionReport:
    return DecompositionReport(
        **{name: Estimate(point[name], se[name]) for name in COMPONENTS},
        estimator=estimator, n0=n0, n1=n1, diagnostics=diagnostics,
    )


def _group_split(dataset: Dataset):
    x = dataset.protected_indicator()
    n0, n1 = int(np.sum(x == 0)), int(np.sum(x == 1))
    if n0 == 0 or n1 == 0:
        raise EmptyGroup(f"Both protected groups need rows, got n0={n0}, n1={n1}")
    return x, n0, n1


def _bootstrap_se(draws) -> Dict[str, float]:
    if len(draws) < 2:
        return {name: np.nan for name in COMPONENTS}
    return {name: float(np.std([d[name] for d in draws], ddof=1)) for name in COMPONENTS}


# ==================== TV ====================

def tv_empirical(dataset: Dataset) -> Estimate:
    """
    mean(Y|x1) - mean(Y|x0) with se sqrt(s1^2/n1 + s0^2/n0).

    Raises:
        EmptyGroup: If a protected group has no rows
    """
    x, n0, n1 = _group_split(dataset)
    y = dataset.outcome()
    y0, y1 = y[x == 0], y[x == 1]
    var0 = np.var(y0, ddof=1) if n0 > 1 else np.nan
    var1 = np.var(y1, ddof=1) if n1 > 1 else np.nan
    return Estimate(float(np.mean(y1) - np.mean(y0)), float(np.sqrt(var1 / n1 + var0 / n0)))


# ==================== PLUG-IN ====================

def plugin_strata(dataset: Dataset, n_bootstrap: int = 200, seed: int = 0) -> DecompositionReport:
    """
    Plug-in decomposition from empirical cell frequencies and cell means.

    Standard errors come from a seeded nonparametric bootstrap; resamples that
    hit an empty stratum are skipped and counted.

    Args:
        dataset: Complete dataset with discrete confounders and mediators
        n_bootstrap: Bootstrap resamples (0 disables standard errors)
        seed: Bootstrap seed

    Returns:
        DecompositionReport

    Raises:
        EmptyStratum: If an (x1, w, z) cell needed by the formulas has no rows
    """
    x, n0, n1 = _group_split(dataset)
    index = strata_index(dataset)
    cnt, ysum = index.counts()

    gaps = positivity_gaps(cnt)
    if len(gaps):
        labels = (dataset.schema.x0_label, dataset.schema.x1_label)
        raise EmptyStratum([index.describe_cell(1, int(z), int(w), labels) for z, w in gaps])

    point = _components(**plugin_functionals(cnt, ysum))

    rng = np.random.default_rng(seed)
    draws, failures = [], 0
    for _ in range(n_bootstrap):
        rows = rng.integers(0, dataset.n, dataset.n)
        cnt_b, ysum_b = index.counts(rows)
        if len(positivity_gaps(cnt_b)):
            failures += 1
            continue
        try:
            draws.append(_components(**plugin_functionals(cnt_b, ysum_b)))
        except EmptyGroup:
            failures += 1

    diagnostics = {"n_bootstrap": n_bootstrap, "bootstrap_failures": failures}
    return _report(point, _bootstrap_se(draws), Estimator.PLUGIN_STRATA, n0, n1, diagnostics)


def _model_functionals(x: np.ndarray, y: np.ndarray, mu1: np.ndarray, m1: np.ndarray) -> Dict[str, float]:
    g0, g1 = x == 0, x == 1
    return {
        "ey0": float(np.mean(y[g0])),
        "ey1": float(np.mean(y[g1])),
        "theta1": float(np.mean(mu1[g0])),
        "theta2": float(np.mean(m1[g0])),
    }


def _check_fits(dataset: Dataset, fits: NuisanceFits):
    if fits.n != dataset.n:
        raise SchemaMismatch(f"Nuisance fits cover {fits.n} rows, dataset has {dataset.n}")


def plugin_model(dataset: Dataset, fits: NuisanceFits, n_bootstrap: int = 200, seed: int = 0) -> DecompositionReport:
    """
    Plug-in decomposition from fitted regressions:
    theta1 = mean of mu1 over x0 rows, theta2 = mean of m1 over x0 rows.

    Standard errors come from a bootstrap over rows with the fits held fixed.
    """
    _check_fits(dataset, fits)
    x, n0, n1 = _group_split(dataset)
    y = dataset.outcome()
    point = _components(**_model_functionals(x, y, fits.mu1, fits.m1))

    rng = np.random.default_rng(seed)
    draws, failures = [], 0
    for _ in range(n_bootstrap):
        rows = rng.integers(0, dataset.n, dataset.n)
        xb = x[rows]
        if not (np.any(xb == 0) and np.any(xb == 1)):
            failures += 1
            continue
        draws.append(_components(**_model_functionals(xb, y[rows], fits.mu1[rows], fits.m1[rows])))

    diagnostics = {"n_bootstrap": n_bootstrap, "bootstrap_failures": failures, "fits": fits.source}
    return _report(point, _bootstrap_se(draws), Estimator.PLUGIN_MODEL, n0, n1, diagnostics)


# ==================== DEBIASED ====================

def _extreme_count(psi: np.ndarray) -> int:
    q25, q75 = np.percentile(psi, [25, 75])
    iqr = q75 - q25
    if iqr <= 0:
        return 0
    return int(np.sum(np.abs(psi - np.median(psi)) > EXTREME_IQR_MULTIPLE * iqr))


def flag_extreme(name: str, psi: np.ndarray) -> int:
    """Count pseudo-outcomes further than 50 IQRs from the median and warn if any."""
    count = _extreme_count(psi)
    if count:
        warnings.warn(
            f"{name}: {count} pseudo-outcome(s) exceed {EXTREME_IQR_MULTIPLE:g}x the interquartile range",
            ExtremeWeightsWarning,
            stacklevel=3,
        )
    return count


def debiased_decomposition(dataset: Dataset, fits: NuisanceFits) -> DecompositionReport:
    """
    One-step debiased decomposition from cross-fitted nuisances.

    Pseudo-outcomes (averaged over the n0 rows of group x0):
        psi1 = 1{x1} odds0 (y - mu1) + 1{x0} (mu1 - eta) + 1{x0} eta
        psi2 = 1{x1} (1 - e1)/e1 (y - m1) + 1{x0} m1

    Standard errors come from the empirical variance of each component's
    influence function, so the shared theta terms are accounted for.

    Args:
        dataset: Complete dataset
        fits: Out-of-fold nuisance values (cross_fit output)

    Returns:
        DecompositionReport (diagnostics carry the extreme-weight count)
    """
    _check_fits(dataset, fits)
    x, n0, n1 = _group_split(dataset)
    n = dataset.n
    y = dataset.outcome()
    g0, g1 = (x == 0).astype(float), (x == 1).astype(float)
    p0, p1 = n0 / n, n1 / n

    psi1 = g1 * fits.odds0 * (y - fits.mu1) + g0 * (fits.mu1 - fits.eta) + g0 * fits.eta
    psi2 = g1 * ((1.0 - fits.e1) / fits.e1) * (y - fits.m1) + g0 * fits.m1

    ey0 = float(np.sum(g0 * y) / n0)
    ey1 = float(np.sum(g1 * y) / n1)
    theta1 = float(np.sum(psi1) / n0)
    theta2 = float(np.sum(psi2) / n0)
    point = _components(ey0, ey1, theta1, theta2)

    influence = {
        "ey0": g0 * (y - ey0) / p0,
        "ey1": g1 * (y - ey1) / p1,
        "theta1": (psi1 - theta1 * g0) / p0,
        "theta2": (psi2 - theta2 * g0) / p0,
    }
    by_component = {
        "tv": influence["ey1"] - influence["ey0"],
        "x_de": influence["theta1"] - influence["ey0"],
        "x_ie": influence["theta1"] - influence["theta2"],
        "x_se": influence["theta2"] - influence["ey1"],
    }
    se = {name: float(np.sqrt(np.sum(phi ** 2)) / n) for name, phi in by_component.items()}

    diagnostics = {
        "extreme_weights": flag_extreme("theta1", psi1) + flag_extreme("theta2", psi2),
        "max_abs_psi": float(max(np.max(np.abs(psi1)), np.max(np.abs(psi2)))),
        "clip_counts": dict(fits.clip_counts),
    }
    return _report(point, se, Estimator.DEBIASED, n0, n1, diagnostics)


# ==================== RENDERING ====================

def format_decomposition(report: DecompositionReport) -> str:
    """Aligned text table: TV = spurious + indirect + direct, then the per-component table."""
    shown = report.display_components
    shares = report.shares
    lines = [
        f"Estimator: {report.estimator.value}  (n0={report.n0}, n1={report.n1})",
        "TV = spurious + indirect + direct",
        f"{report.tv.estimate:.3f} = {shown['spurious']:.3f} + {shown['indirect']:.3f} + {shown['direct']:.3f}",
        "",
        f"{'component':<10} {'estimate':>10} {'se':>8} {'ci95':>20} {'share':>7}",
    ]
    display_source = {"direct": report.x_de, "indirect": report.x_ie, "spurious": report.x_se}
    for name, value in (("total", report.tv.estimate), *shown.items()):
        est = report.tv if name == "total" else display_source[name]
        sign = -1.0 if name in ("indirect", "spurious") else 1.0
        lo, hi = sorted(sign * v for v in est.ci95)
        share = "" if name == "total" or shares[name] is None else f"{100 * shares[name]:.1f}%"
        lines.append(f"{name:<10} {value:>10.3f} {est.se:>8.3f} {f'[{lo:.3f}, {hi:.3f}]':>20} {share:>7}")
    lines.append("")
    lines.append(
        f"Signed form: TV = x-DE - x-IE - x-SE = {report.x_de.estimate:.3f} - ({report.x_ie.estimate:.3f})"
        f" - ({report.x_se.estimate:.3f})"
    )
    return "\n".join(lines)
