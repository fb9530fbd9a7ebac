"""
Sensitivity - Robustness values, covariate benchmarks and overlap trimming

The robustness analysis runs on a linear outcome model Y ~ 1 + X + Z + W.
An unobserved confounder explaining a share r of the residual variance of
both X and Y moves the X coefficient by

    bias = se * sqrt(dof) * sqrt(r2_yz_dx * r2_dz_x / (1 - r2_dz_x))

and the robustness value is the equal-strength r at which the estimate
reaches zero (q = 1) or loses significance at level alpha.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import statsmodels.api as sm
from scipy import optimize, stats

from src.core.dataset import Dataset
from src.core.encoding import encode
from src.core.folds import assign_folds
from src.errors import BadConfig, ConstructionFailure, DegenerateModel, EmptyAfterTrim
from src.estimators.decomposition import COMPONENTS, DecompositionReport, debiased_decomposition
from src.nuisance.cross_fit import NuisanceConfig, NuisanceFits, cross_fit

DEFAULT_THRESHOLDS = (1, 2, 3, 4, 5)
ORACLE_NOISE_STREAM = 7


# ==================== LINEAR MODEL ====================

@dataclass(frozen=True)
class SensitivityModel:
    """
    OLS fit of Y on [1, X, Z, W].

    Attributes:
        result: statsmodels regression results
        design: Full design matrix (constant first, X second)
        names: Design column names
        blocks: Schema variable -> design column indices (Z and W only)
    """
    result: object
    design: np.ndarray
    outcome: np.ndarray
    names: List[str]
    blocks: Dict[str, List[int]]

    @property
    def estimate(self) -> float:
        return float(self.result.params[1])

    @property
    def se(self) -> float:
        return float(self.result.bse[1])

    @property
    def tstat(self) -> float:
        return float(self.result.tvalues[1])

    @property
    def dof(self) -> float:
        return float(self.result.df_resid)


def _check_design(design: np.ndarray, what: str):
    n, p = design.shape
    if n - p <= 0:
        raise DegenerateModel(f"{what}: no residual degrees of freedom (n={n}, p={p})")
    if np.linalg.matrix_rank(design) < p:
        raise DegenerateModel(f"{what}: design matrix is rank deficient ({p} columns)")


def fit_sensitivity_model(dataset: Dataset) -> SensitivityModel:
    """
    Fit the linear outcome model used for robustness values.

    Raises:
        MissingData: If the dataset has missing cells
        DegenerateModel: If dof <= 0 or the design is singular
    """
    design = encode(dataset)
    n = dataset.n
    design_matrix = np.column_stack([np.ones(n), design.x.astype(float), design.z, design.w])
    names = ["const", dataset.schema.protected.name, *design.z_names, *design.w_names]

    blocks = {name: [2 + i for i in cols] for name, cols in design.z_groups.items()}
    offset = 2 + design.z.shape[1]
    blocks.update({name: [offset + i for i in cols] for name, cols in design.w_groups.items()})

    _check_design(design_matrix, "sensitivity model")
    result = sm.OLS(design.y, design_matrix).fit()
    return SensitivityModel(result=result, design=design_matrix, outcome=design.y, names=names, blocks=blocks)


# ==================== ROBUSTNESS VALUES ====================

def partial_f(t: float, dof: float, q: float = 1.0) -> float:
    """Partial Cohen's f of the estimate scaled by the fraction q to explain away."""
    if dof <= 0:
        raise DegenerateModel(f"Residual degrees of freedom must be positive, got {dof}")
    return q * abs(t) / np.sqrt(dof)


def rv_from_f(f: float) -> float:
    """Equal-strength partial R^2 that absorbs a partial f: 0.5 (sqrt(f^4 + 4 f^2) - f^2)."""
    if f <= 0:
        return 0.0
    return float(0.5 * (np.sqrt(f ** 4 + 4 * f ** 2) - f ** 2))


def robustness_values(t: float, dof: float, q: float = 1.0, alpha: float = 0.05) -> Tuple[float, float]:
    """
    (rv_q, rv_alpha) for a coefficient with t-statistic t.

    rv_alpha subtracts the critical-t share |t_{alpha/2, dof-1}| / sqrt(dof - 1)
    from f and is 0 when the estimate is not significant to begin with.
    """
    fq = partial_f(t, dof, q)
    rv_q = rv_from_f(fq)
    if dof <= 1:
        return rv_q, 0.0
    f_crit = abs(stats.t.ppf(alpha / 2, dof - 1)) / np.sqrt(dof - 1)
    fqa = fq - f_crit
    return rv_q, (rv_from_f(fqa) if fqa > 0 else 0.0)


def bias_bound(se: float, dof: float, r2_dz_x: float, r2_yz_dx: float) -> float:
    """Absolute bias of the X coefficient from a confounder with the given partial R^2 values."""
    if r2_dz_x >= 1:
        return np.inf
    return float(se * np.sqrt(dof) * np.sqrt(r2_yz_dx * r2_dz_x / (1.0 - r2_dz_x)))


def adjusted_se(se: float, dof: float, r2_dz_x: float, r2_yz_dx: float) -> float:
    """Standard error after adjusting for the confounder (one fewer degree of freedom)."""
    return float(se * np.sqrt((1.0 - r2_yz_dx) / (1.0 - r2_dz_x)) * np.sqrt(dof / (dof - 1)))


def _partial_r2(target: np.ndarray, full: np.ndarray, cols: Sequence[int]) -> float:
    """1 - RSS_full / RSS_reduced for dropping cols from the full design."""
    dropped = set(cols)
    keep = [j for j in range(full.shape[1]) if j not in dropped]
    rss_full = sm.OLS(target, full).fit().ssr
    rss_reduced = sm.OLS(target, full[:, keep]).fit().ssr
    if rss_reduced <= 0:
        return 0.0
    return float(max(0.0, 1.0 - rss_full / rss_reduced))


def _as_strong_as(r2_dxj: float, r2_yxj: float) -> Tuple[float, float]:
    """Bounds for a confounder once as strong as a benchmark covariate (k_D = k_Y = 1)."""
    if r2_dxj >= 1 or r2_yxj >= 1:
        return np.nan, np.nan
    r2_dz = r2_dxj / (1.0 - r2_dxj)
    if r2_dz >= 1:
        return np.nan, np.nan
    r2_zxj = r2_dxj ** 2 / ((1.0 - r2_dxj) * (1.0 - r2_dxj))
    if r2_zxj >= 1:
        return r2_dz, np.nan
    r2_yz = ((1.0 + np.sqrt(r2_zxj)) / np.sqrt(1.0 - r2_zxj)) ** 2 * (r2_yxj / (1.0 - r2_yxj))
    return float(r2_dz), float(min(r2_yz, 1.0))


@dataclass(frozen=True)
class Benchmark:
    variable: str
    r2_dz_x: float
    r2_yz_dx: float
    bound_r2_dz_x: float
    bound_r2_yz_dx: float
    adjusted_estimate: float
    adjusted_se: float
    adjusted_t: float

    def to_dict(self) -> Dict:
        return dict(self.__dict__)


def benchmarks(model: SensitivityModel) -> List[Benchmark]:
    """
    Partial R^2 of every Z and W variable with treatment and outcome, plus the
    estimate adjusted for a confounder as strong as that variable.

    Categoricals are benchmarked as a block of indicator columns.
    """
    design = model.design
    treatment = design[:, 1]
    covariates = np.delete(design, 1, axis=1)
    out = []
    for variable, cols in model.blocks.items():
        r2_dxj = _partial_r2(treatment, covariates, [c - 1 for c in cols])
        r2_yxj = _partial_r2(model.outcome, design, cols)
        r2_dz, r2_yz = _as_strong_as(r2_dxj, r2_yxj)

        if np.isfinite(r2_dz) and np.isfinite(r2_yz):
            bias = bias_bound(model.se, model.dof, r2_dz, r2_yz)
            adjusted = float(np.sign(model.estimate) * (abs(model.estimate) - bias))
            se = adjusted_se(model.se, model.dof, r2_dz, r2_yz)
            t = adjusted / se if se > 0 else np.nan
        else:
            adjusted, se, t = np.nan, np.nan, np.nan
        out.append(Benchmark(variable, r2_dxj, r2_yxj, r2_dz, r2_yz, adjusted, se, t))
    return out


@dataclass(frozen=True)
class SensitivityReport:
    """Robustness values for the X coefficient plus observed-covariate benchmarks."""
    estimate: float
    se: float
    treatment_tstat: float
    dof: float
    q: float
    alpha: float
    rv_q1: float
    rv_alpha: float
    benchmarks: List[Benchmark] = field(default_factory=list)

    def to_dict(self) -> Dict:
        return {
            "estimate": self.estimate,
            "se": self.se,
            "treatment_tstat": self.treatment_tstat,
            "dof": self.dof,
            "q": self.q,
            "alpha": self.alpha,
            "rv_q1": self.rv_q1,
            "rv_alpha": self.rv_alpha,
            "benchmarks": [b.to_dict() for b in self.benchmarks],
        }


def robustness_value(model: SensitivityModel, q: float = 1.0, alpha: float = 0.05) -> SensitivityReport:
    """
    Robustness values of the X coefficient in a fitted sensitivity model.

    Args:
        model: fit_sensitivity_model output
        q: Fraction of the estimate the confounder must explain away
        alpha: Significance level for rv_alpha

    Returns:
        SensitivityReport

    Raises:
        DegenerateModel: If dof <= 0
    """
    rv_q, rv_alpha = robustness_values(model.tstat, model.dof, q, alpha)
    return SensitivityReport(
        estimate=model.estimate,
        se=model.se,
        treatment_tstat=model.tstat,
        dof=model.dof,
        q=q,
        alpha=alpha,
        rv_q1=rv_q,
        rv_alpha=rv_alpha,
        benchmarks=benchmarks(model),
    )


def format_sensitivity(report: SensitivityReport) -> str:
    lines = [
        f"X coefficient: {report.estimate:.4f} (se {report.se:.4f}, t {report.treatment_tstat:.2f}, dof {report.dof:.0f})",
        f"RV(q={report.q:g}): {100 * report.rv_q1:.2f}%   RV(alpha={report.alpha:g}): {100 * report.rv_alpha:.2f}%",
        "",
        f"{'benchmark':<24} {'R2_dz.x':>9} {'R2_yz.dx':>9} {'adj. est':>10} {'adj. t':>8}",
    ]
    for b in report.benchmarks:
        lines.append(
            f"{b.variable:<24} {100 * b.r2_dz_x:>8.2f}% {100 * b.r2_yz_dx:>8.2f}% "
            f"{b.adjusted_estimate:>10.4f} {b.adjusted_t:>8.2f}"
        )
    return "\n".join(lines)


# ==================== CONSTRUCTED-CONFOUNDER ORACLE ====================

@dataclass(frozen=True)
class AdjustedFit:
    """X coefficient after adding a constructed confounder to the model."""
    estimate: float
    se: float
    t: float
    dof: float


def _unit_residual(target: np.ndarray, basis: np.ndarray) -> np.ndarray:
    coef, *_ = np.linalg.lstsq(basis, target, rcond=None)
    resid = target - basis @ coef
    norm = np.linalg.norm(resid)
    if norm <= 1e-12:
        raise ConstructionFailure("Residual has zero norm; cannot construct confounder")
    return resid / norm


def rv_grid_oracle(dataset: Dataset, target_partial_r2: float, seed: int = 0) -> AdjustedFit:
    """
    Refit the sensitivity model with a constructed confounder U whose sample
    partial R^2 with X (given Z, W) and with Y (given X, Z, W) both equal the target.

    U = sqrt(r) d + b y_perp + (1 - r) e with b = +-sqrt(r (1 - r)), where d is the
    unit residual of X on [1, Z, W], y_perp the unit residual of Y on [1, Z, W, X]
    and e seeded noise orthogonal to both. The sign of b that shrinks |estimate| is used.

    Raises:
        ConstructionFailure: If the target is outside [0, 1) or U cannot be built
    """
    if not 0 <= target_partial_r2 < 1:
        raise ConstructionFailure(f"Target partial R^2 must be in [0, 1), got {target_partial_r2}")
    model = fit_sensitivity_model(dataset)
    design = model.design
    y = model.outcome
    x = design[:, 1]
    controls = np.delete(design, 1, axis=1)
    r = float(target_partial_r2)

    d_hat = _unit_residual(x, controls)
    y_perp = _unit_residual(y, design)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, ORACLE_NOISE_STREAM])))
    noise = _unit_residual(rng.standard_normal(dataset.n), np.column_stack([design, y]))

    fits = []
    for sign in (1.0, -1.0):
        u = np.sqrt(r) * d_hat + sign * np.sqrt(r * (1.0 - r)) * y_perp + (1.0 - r) * noise
        augmented = np.column_stack([design, u])
        _check_design(augmented, "constructed-confounder model")
        res = sm.OLS(y, augmented).fit()
        fits.append(AdjustedFit(float(res.params[1]), float(res.bse[1]), float(res.tvalues[1]), float(res.df_resid)))
    return min(fits, key=lambda fit: abs(fit.estimate))


def rv_grid_search(dataset: Dataset, grid: Optional[Sequence[float]] = None, seed: int = 0) -> float:
    """
    Smallest constructed-confounder strength that drives the X coefficient to zero.

    Scans the grid for the first sign change of the adjusted estimate, then
    refines by root finding. Returns NaN when no strength on the grid crosses zero.
    """
    grid = np.linspace(0.0, 0.95, 96) if grid is None else np.asarray(sorted(grid), dtype=float)
    base = rv_grid_oracle(dataset, 0.0, seed).estimate
    if base == 0:
        return 0.0
    direction = np.sign(base)

    def signed(r: float) -> float:
        return direction * rv_grid_oracle(dataset, r, seed).estimate

    previous = None
    for r in grid:
        value = signed(r)
        if value <= 0:
            if previous is None:
                return float(r)
            return float(optimize.brentq(signed, previous, r, xtol=1e-10))
        previous = r
    return float("nan")


# ==================== OVERLAP TRIMMING ====================

@dataclass(frozen=True)
class TrimmingEntry:
    percentile: float
    n_retained: int
    report: DecompositionReport


@dataclass(frozen=True)
class TrimmingCurve:
    """Decomposition re-estimated at each two-sided propensity trimming level."""
    entries: List[TrimmingEntry]
    outcome_sd: float = 1.0

    def baseline(self) -> TrimmingEntry:
        return next(e for e in self.entries if e.percentile == 0)

    def drift(self, scale: float = 1.0) -> Dict[str, float]:
        """Largest absolute move of each component away from the untrimmed estimate, divided by scale."""
        base = self.baseline().report.components()
        out = {}
        for name in COMPONENTS:
            moves = [abs(e.report.components()[name].estimate - base[name].estimate) for e in self.entries]
            out[name] = float(max(moves)) / scale
        return out

    def to_frame(self) -> pd.DataFrame:
        rows = []
        for entry in self.entries:
            for name, est in entry.report.components().items():
                lo, hi = est.ci95
                rows.append({
                    "percentile": entry.percentile,
                    "n_retained": entry.n_retained,
                    "component": name,
                    "estimate": est.estimate,
                    "se": est.se,
                    "ci_lo": lo,
                    "ci_hi": hi,
                })
        return pd.DataFrame(rows, columns=["percentile", "n_retained", "component", "estimate", "se", "ci_lo", "ci_hi"])

    def to_dict(self) -> Dict:
        return {
            "entries": [
                {"percentile": e.percentile, "n_retained": e.n_retained, "report": e.report.to_dict()}
                for e in self.entries
            ],
            "drift": self.drift(),
            "drift_sd": self.drift(scale=self.outcome_sd),
        }


def trim_rows(e1: np.ndarray, percentile: float) -> np.ndarray:
    """Rows whose propensity lies within the [p, 100 - p] percentiles of the pooled distribution."""
    if percentile <= 0:
        return np.arange(len(e1))
    lo, hi = np.percentile(e1, [percentile, 100.0 - percentile])
    return np.flatnonzero((e1 >= lo) & (e1 <= hi))


def _retrimmed(dataset: Dataset, fits: NuisanceFits, percentile: float, k: int, seed: int,
               nuisance: Optional[NuisanceConfig]) -> TrimmingEntry:
    rows = trim_rows(fits.e1, percentile)
    trimmed = dataset.take(rows)
    n0, n1 = trimmed.group_sizes()
    if n0 == 0 or n1 == 0 or trimmed.n < k:
        raise EmptyAfterTrim(
            f"Trimming at the {percentile:g}th percentile leaves n0={n0}, n1={n1} (need both groups and n >= {k})"
        )
    folds = assign_folds(trimmed.n, k, seed + int(percentile))
    refit = cross_fit(trimmed, folds, nuisance)
    return TrimmingEntry(percentile, trimmed.n, debiased_decomposition(trimmed, refit))


def trimming_curve(dataset: Dataset, fits: NuisanceFits, thresholds: Sequence[float] = DEFAULT_THRESHOLDS,
                   k: int = 10, seed: int = 0, nuisance: Optional[NuisanceConfig] = None,
                   threads: int = 1) -> TrimmingCurve:
    """
    Re-estimate the debiased decomposition after propensity trimming.

    Percentile 0 reuses the given fits; every other threshold refits the
    nuisances on the retained rows with fold seed seed + percentile.

    Args:
        dataset: Complete dataset
        fits: Cross-fitted nuisances on the full dataset (supplies e1)
        thresholds: Trimming percentiles
        k: Fold count for the refits
        seed: Base fold seed
        nuisance: Learner configuration for the refits
        threads: Thresholds processed in parallel

    Returns:
        TrimmingCurve sorted by percentile, always including 0

    Raises:
        EmptyAfterTrim: If trimming empties a group or leaves fewer than k rows
    """
    levels = sorted({0.0, *(float(p) for p in thresholds)})
    bad = [p for p in levels if not 0 <= p < 50]
    if bad:
        raise BadConfig(f"Trimming percentiles must lie in [0, 50), got {bad}")

    baseline = TrimmingEntry(0.0, dataset.n, debiased_decomposition(dataset, fits))
    others = [p for p in levels if p > 0]
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        entries = list(pool.map(lambda p: _retrimmed(dataset, fits, p, k, seed, nuisance), others))
    return TrimmingCurve(entries=[baseline, *entries], outcome_sd=float(np.std(dataset.outcome(), ddof=1)))
