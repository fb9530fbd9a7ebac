"""
Cross-fitting - Out-of-fold nuisance predictions for the debiased estimators

For every fold the outcome, propensity, mediator-odds and nested models are
trained on the complement and evaluated on the fold. Folds run in a thread
pool; models hold no shared RNG so results never depend on the pool size.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, Optional, Tuple

import numpy as np

from src.core.dataset import Dataset
from src.core.encoding import DesignMatrices, encode
from src.core.folds import FoldAssignment
from src.errors import BadConfig, EmptyStratum, FoldCollapse
from src.learners import LearnerConfig, fit_learner, logistic_defaults
from src.nuisance.strata import cell_moments, strata_index

FIT_FIELDS = ("mu1", "mu0", "e1", "odds0", "eta", "m1", "m0")


@dataclass(frozen=True)
class NuisanceConfig:
    """Learner per nuisance role plus the propensity clip level."""
    outcome: LearnerConfig = field(default_factory=LearnerConfig)
    propensity: LearnerConfig = field(default_factory=logistic_defaults)
    mediator_odds: LearnerConfig = field(default_factory=LearnerConfig)
    nested: LearnerConfig = field(default_factory=LearnerConfig)
    clip: float = 0.01

    def __post_init__(self):
        if not 0 <= self.clip < 0.5:
            raise BadConfig(f"clip must be in [0, 0.5), got {self.clip}")

    @classmethod
    def from_dict(cls, learners: Optional[Dict], clip: float = 0.01) -> "NuisanceConfig":
        learners = dict(learners or {})
        unknown = set(learners) - {"outcome", "propensity", "mediator_odds", "nested"}
        if unknown:
            raise BadConfig(f"Unknown nuisance roles: {sorted(unknown)}")
        return cls(
            outcome=LearnerConfig.from_dict(learners.get("outcome")),
            propensity=LearnerConfig.from_dict(learners.get("propensity"), family="logistic_linear"),
            mediator_odds=LearnerConfig.from_dict(learners.get("mediator_odds")),
            nested=LearnerConfig.from_dict(learners.get("nested")),
            clip=clip,
        )

    def to_dict(self) -> Dict:
        return {
            "outcome": self.outcome.to_dict(),
            "propensity": self.propensity.to_dict(),
            "mediator_odds": self.mediator_odds.to_dict(),
            "nested": self.nested.to_dict(),
            "clip": self.clip,
        }


@dataclass(frozen=True)
class NuisanceFits:
    """
    Per-row nuisance values.

    mu_x = E[Y|x,W,Z], e1 = P(x1|Z), odds0 = P(x0|W,Z)/P(x1|W,Z),
    eta = E[mu1|Z, x0], m_x = E[Y|x,Z].
    """
    mu1: np.ndarray
    mu0: np.ndarray
    e1: np.ndarray
    odds0: np.ndarray
    eta: np.ndarray
    m1: np.ndarray
    m0: np.ndarray
    clip_bounds: Tuple[float, float]
    clip_counts: Dict[str, int] = field(default_factory=dict)
    source: str = "cross_fit"

    @property
    def n(self) -> int:
        return len(self.mu1)

    def take(self, rows) -> "NuisanceFits":
        rows = np.asarray(rows, dtype=int)
        return replace(self, **{name: getattr(self, name)[rows] for name in FIT_FIELDS})

    def with_values(self, **arrays) -> "NuisanceFits":
        return replace(self, **arrays)


def _clip(values: np.ndarray, clip: float, counts: Dict[str, int], prefix: str) -> np.ndarray:
    lo, hi = clip, 1.0 - clip
    counts[f"{prefix}_low"] = int(np.sum(values < lo))
    counts[f"{prefix}_high"] = int(np.sum(values > hi))
    return np.clip(values, lo, hi)


def _check_complement(dataset: Dataset, design: DesignMatrices, train: np.ndarray, fold: int):
    x_train = design.x[train]
    for g in (0, 1):
        if not np.any(x_train == g):
            raise FoldCollapse(f"Training complement of fold {fold} has no rows with X={g}")
    for spec in dataset.schema.mediators:
        if not spec.is_discrete:
            continue
        observed = set(dataset.level_labels(spec.name)[train])
        absent = [level for level in spec.domain() if level not in observed]
        if absent:
            raise FoldCollapse(f"Training complement of fold {fold} lacks {spec.name} level(s) {absent}")


def _fit_fold(design: DesignMatrices, folds: FoldAssignment, fold: int, config: NuisanceConfig) -> Dict:
    train, test = folds.train_rows(fold), folds.test_rows(fold)
    x_train, y = design.x[train], design.y
    wz, z = design.wz, design.z
    has_mediators = design.w.shape[1] > 0
    out: Dict[str, np.ndarray] = {}

    outcome_models = {}
    for g in (0, 1):
        rows = train[x_train == g]
        outcome_models[g] = fit_learner(config.outcome, wz[rows], y[rows], "squared")
        out[f"mu{g}"] = outcome_models[g].predict(wz[test])
        if has_mediators:
            out[f"m{g}"] = fit_learner(config.outcome, z[rows], y[rows], "squared").predict(z[test])
        else:
            out[f"m{g}"] = out[f"mu{g}"]

    out["e1_raw"] = fit_learner(config.propensity, z[train], x_train, "logistic").predict(z[test])
    out["p1_raw"] = fit_learner(config.mediator_odds, wz[train], x_train, "logistic").predict(wz[test])

    rows0 = train[x_train == 0]
    nested_targets = outcome_models[1].predict(wz[rows0])
    out["eta"] = fit_learner(config.nested, z[rows0], nested_targets, "squared").predict(z[test])
    out["rows"] = test
    return out


def cross_fit(dataset: Dataset, folds: FoldAssignment, config: Optional[NuisanceConfig] = None,
              threads: int = 1) -> NuisanceFits:
    """
    K-fold cross-fitted nuisance predictions.

    Args:
        dataset: Complete dataset
        folds: Fold assignment over dataset rows
        config: Learners and clip level
        threads: Worker threads (folds run in parallel)

    Returns:
        NuisanceFits whose row i comes from models that never saw fold_of[i]

    Raises:
        MissingData: If the dataset has missing cells
        FoldCollapse: If a training complement lacks an X group or a mediator level
    """
    config = config or NuisanceConfig()
    design = encode(dataset)
    if len(folds.fold_of) != dataset.n:
        raise BadConfig(f"Fold assignment covers {len(folds.fold_of)} rows, dataset has {dataset.n}")
    for fold in range(folds.k):
        _check_complement(dataset, design, folds.train_rows(fold), fold)

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        parts = list(pool.map(lambda f: _fit_fold(design, folds, f, config), range(folds.k)))

    merged = {name: np.empty(dataset.n) for name in ("mu1", "mu0", "m1", "m0", "eta", "e1_raw", "p1_raw")}
    for part in parts:
        for name in merged:
            merged[name][part["rows"]] = part[name]

    counts: Dict[str, int] = {}
    e1 = _clip(merged["e1_raw"], config.clip, counts, "e1")
    p1 = _clip(merged["p1_raw"], config.clip, counts, "odds")
    return NuisanceFits(
        mu1=merged["mu1"],
        mu0=merged["mu0"],
        e1=e1,
        odds0=(1.0 - p1) / p1,
        eta=merged["eta"],
        m1=merged["m1"],
        m0=merged["m0"],
        clip_bounds=(config.clip, 1.0 - config.clip),
        clip_counts=counts,
    )


def saturated_fits(dataset: Dataset, clip: float = 0.0) -> NuisanceFits:
    """
    In-sample stratum-level nuisances for discrete data: cell means for mu,
    cell frequencies for e1 and odds0, and exact sums over w for m and eta.

    Raises:
        EmptyStratum: If a row's (z, w) cell is empty in the other group
    """
    index = strata_index(dataset)
    cnt, ysum = index.counts()
    moments = cell_moments(cnt, ysum)
    mu, pw, n_xz = moments["mu"], moments["pw"], moments["n_xz"]

    z, w = index.z_code, index.w_code
    pairs = np.unique(z * index.n_w + w)
    pz, pw_code = pairs // index.n_w, pairs % index.n_w
    empty = [(g, int(zi), int(wi)) for g in (0, 1) for zi, wi in zip(pz, pw_code) if cnt[g, zi, wi] == 0]
    if empty:
        labels = (dataset.schema.x0_label, dataset.schema.x1_label)
        raise EmptyStratum([index.describe_cell(g, zi, wi, labels) for g, zi, wi in empty])

    with np.errstate(invalid="ignore", divide="ignore"):
        m = np.where(n_xz > 0, ysum.sum(axis=2) / np.maximum(n_xz, 1), 0.0)
    eta = np.sum(mu[1] * pw[0], axis=1)
    counts: Dict[str, int] = {}
    e1 = _clip(n_xz[1][z] / (n_xz[0][z] + n_xz[1][z]), clip, counts, "e1")
    return NuisanceFits(
        mu1=mu[1][z, w],
        mu0=mu[0][z, w],
        e1=e1,
        odds0=cnt[0][z, w] / cnt[1][z, w],
        eta=eta[z],
        m1=m[1][z],
        m0=m[0][z],
        clip_bounds=(clip, 1.0 - clip),
        clip_counts=counts,
        source="saturated",
    )
