"""
Causal forest - Honest, orthogonalized forest for the conditional effect tau(z)

Outcome and protected attribute are first residualized on Z with cross-fitted
nuisances (y~ = y - m(z), x~ = x - e(z)). Each tree splits its structure half
to maximize n_L * n_R * (tau_L - tau_R)^2 with tau = sum(x~ y~) / sum(x~^2),
and stores leaf sums from the disjoint estimation half. Trees come in little
bags of group_size trees sharing one half-sample; the spread between and
within bags gives pointwise variances.
"""

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy import stats

from src.core.dataset import Dataset
from src.core.encoding import encode, encode_block
from src.core.folds import FoldAssignment
from src.errors import BadConfig, InsufficientVariation, NoSplitWarning, SchemaError, SchemaMismatch
from src.estimators.common import Estimate, SMALL_CELL, check_dimension, grouped_summary, mean_estimate
from src.learners import fit_learner
from src.nuisance.cross_fit import NuisanceConfig

UNLIMITED_DEPTH = 64


@dataclass(frozen=True)
class CausalForestConfig:
    n_trees: int = 500
    subsample_fraction: float = 0.5
    honesty_fraction: float = 0.5
    max_depth: Optional[int] = None
    min_leaf_treated: int = 5
    min_leaf_control: int = 5
    mtry: Optional[int] = None
    group_size: int = 2
    seed: int = 0

    def __post_init__(self):
        problems = []
        if self.n_trees < 1:
            problems.append(f"n_trees must be >= 1, got {self.n_trees}")
        if not 0 < self.subsample_fraction <= 1:
            problems.append(f"subsample_fraction must be in (0, 1], got {self.subsample_fraction}")
        if not 0 < self.honesty_fraction < 1:
            problems.append(f"honesty_fraction must be in (0, 1), got {self.honesty_fraction}")
        if self.max_depth is not None and self.max_depth < 1:
            problems.append(f"max_depth must be >= 1, got {self.max_depth}")
        if self.min_leaf_treated < 1 or self.min_leaf_control < 1:
            problems.append("min_leaf_treated and min_leaf_control must be >= 1")
        if self.mtry is not None and self.mtry < 1:
            problems.append(f"mtry must be >= 1, got {self.mtry}")
        if self.group_size < 1:
            problems.append(f"group_size must be >= 1, got {self.group_size}")
        if problems:
            raise BadConfig("; ".join(problems))

    @classmethod
    def from_dict(cls, raw: Optional[Dict], **overrides) -> "CausalForestConfig":
        data = dict(raw or {})
        if "min_leaf" in data:
            leaf = data.pop("min_leaf")
            data.setdefault("min_leaf_treated", leaf)
            data.setdefault("min_leaf_control", leaf)
        data.update(overrides)
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise BadConfig(f"Unknown forest settings: {sorted(unknown)}")
        return cls(**data)

    @property
    def n_groups(self) -> int:
        return math.ceil(self.n_trees / self.group_size)

    def depth_limit(self) -> int:
        return UNLIMITED_DEPTH if self.max_depth is None else self.max_depth


# ==================== TREE ====================

@dataclass
class HonestTree:
    """Array-encoded tree; feature -1 marks a leaf. Leaf sums come from the estimation half only."""
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    depth: np.ndarray
    sxy: np.ndarray
    sxx: np.ndarray
    n_treated: np.ndarray
    n_control: np.ndarray

    @property
    def leaf_tau(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.sxx > 0, self.sxy / np.where(self.sxx > 0, self.sxx, 1.0), 0.0)

    def apply(self, features: np.ndarray) -> np.ndarray:
        """Leaf index of every row (value < threshold goes left)."""
        node = np.zeros(features.shape[0], dtype=np.int64)
        while True:
            feat = self.feature[node]
            rows = np.flatnonzero(feat >= 0)
            if len(rows) == 0:
                return node
            current = node[rows]
            go_left = features[rows, feat[rows]] < self.threshold[current]
            node[rows] = np.where(go_left, self.left[current], self.right[current])

    def predict(self, features: np.ndarray) -> np.ndarray:
        return self.leaf_tau[self.apply(features)]

    @property
    def n_splits(self) -> int:
        return int(np.sum(self.feature >= 0))


class _HonestGrower:
    def __init__(self, z, x_res, y_res, treated, config: CausalForestConfig, rng: np.random.Generator):
        self.z, self.x_res, self.y_res, self.treated = z, x_res, y_res, treated
        self.config = config
        self.rng = rng
        self.mtry = min(z.shape[1], config.mtry or math.ceil(math.sqrt(z.shape[1])))
        self.nodes: List[Dict] = []

    def _enough(self, rows: np.ndarray, factor: int) -> bool:
        n_t = int(self.treated[rows].sum())
        n_c = len(rows) - n_t
        return n_t >= factor * self.config.min_leaf_treated and n_c >= factor * self.config.min_leaf_control

    def _best_split(self, s_rows: np.ndarray, e_rows: np.ndarray) -> Optional[Tuple[int, float]]:
        mlt, mlc = self.config.min_leaf_treated, self.config.min_leaf_control
        if not (self._enough(s_rows, 2) and self._enough(e_rows, 2)):
            return None

        features = self.rng.choice(self.z.shape[1], size=self.mtry, replace=False)
        xs_all, ys_all, t_all = self.x_res[s_rows], self.y_res[s_rows], self.treated[s_rows]
        e_treated = self.treated[e_rows] == 1
        n_t, n_c = int(t_all.sum()), len(s_rows) - int(t_all.sum())
        e_nt, e_nc = int(e_treated.sum()), int((~e_treated).sum())
        sxy, sxx = float(np.sum(xs_all * ys_all)), float(np.sum(xs_all ** 2))

        best, best_score = None, 0.0
        for j in features:
            values = self.z[s_rows, j]
            order = np.argsort(values, kind="stable")
            vs = values[order]
            distinct = vs[:-1] < vs[1:]
            if not distinct.any():
                continue
            xs, ys, ts = xs_all[order], ys_all[order], t_all[order]
            cxy = np.cumsum(xs * ys)[:-1]
            cxx = np.cumsum(xs ** 2)[:-1]
            t_left = np.cumsum(ts)[:-1]
            n_left = np.arange(1, len(vs))
            c_left = n_left - t_left
            thresholds = (vs[:-1] + vs[1:]) / 2.0

            e_values = self.z[e_rows, j]
            et_left = np.searchsorted(np.sort(e_values[e_treated]), thresholds, side="left")
            ec_left = np.searchsorted(np.sort(e_values[~e_treated]), thresholds, side="left")

            valid = (distinct
                     & (t_left >= mlt) & (c_left >= mlc) & (n_t - t_left >= mlt) & (n_c - c_left >= mlc)
                     & (et_left >= mlt) & (ec_left >= mlc) & (e_nt - et_left >= mlt) & (e_nc - ec_left >= mlc)
                     & (cxx > 0) & (sxx - cxx > 0))
            if not valid.any():
                continue
            with np.errstate(invalid="ignore", divide="ignore"):
                tau_left = cxy / cxx
                tau_right = (sxy - cxy) / (sxx - cxx)
                score = n_left * (len(vs) - n_left) * (tau_left - tau_right) ** 2
            score = np.where(valid, score, -np.inf)
            k = int(np.argmax(score))
            if score[k] > best_score:
                best_score, best = float(score[k]), (int(j), float(thresholds[k]))
        return best

    def grow(self, s_rows: np.ndarray, e_rows: np.ndarray, depth: int) -> int:
        node_id = len(self.nodes)
        node = {"feature": -1, "threshold": np.nan, "left": -1, "right": -1, "depth": depth}
        self.nodes.append(node)

        split = self._best_split(s_rows, e_rows) if depth < self.config.depth_limit() else None
        if split is None:
            x_e, y_e = self.x_res[e_rows], self.y_res[e_rows]
            n_t = int(self.treated[e_rows].sum())
            node.update(sxy=float(np.sum(x_e * y_e)), sxx=float(np.sum(x_e ** 2)),
                        n_treated=n_t, n_control=len(e_rows) - n_t)
            return node_id

        j, threshold = split
        node.update(feature=j, threshold=threshold, sxy=np.nan, sxx=np.nan, n_treated=0, n_control=0)
        s_left = self.z[s_rows, j] < threshold
        e_left = self.z[e_rows, j] < threshold
        node["left"] = self.grow(s_rows[s_left], e_rows[e_left], depth + 1)
        node["right"] = self.grow(s_rows[~s_left], e_rows[~e_left], depth + 1)
        return node_id

    def to_tree(self) -> HonestTree:
        def column(key, dtype):
            return np.asarray([node[key] for node in self.nodes], dtype=dtype)

        return HonestTree(
            feature=column("feature", np.int64),
            threshold=column("threshold", float),
            left=column("left", np.int64),
            right=column("right", np.int64),
            depth=column("depth", np.int64),
            sxy=column("sxy", float),
            sxx=column("sxx", float),
            n_treated=column("n_treated", np.int64),
            n_control=column("n_control", np.int64),
        )


def grow_honest_tree(z: np.ndarray, x_res: np.ndarray, y_res: np.ndarray, treated: np.ndarray,
                     struct_rows: np.ndarray, est_rows: np.ndarray, config: CausalForestConfig,
                     rng: np.random.Generator) -> HonestTree:
    """Grow one tree: splits from struct_rows, leaf sums from est_rows."""
    grower = _HonestGrower(z, x_res, y_res, np.asarray(treated, dtype=int), config, rng)
    grower.grow(np.asarray(struct_rows), np.asarray(est_rows), 0)
    return grower.to_tree()


# ==================== FOREST ====================

@dataclass
class CatePrediction:
    tau_hat: np.ndarray
    se: np.ndarray


@dataclass
class CateModel:
    """
    Fitted forest plus its residualizers.

    half_samples[g] lists the training rows of little bag g; tree t belongs to bag tree_group[t].
    """
    trees: List[HonestTree]
    tree_group: np.ndarray
    half_samples: List[np.ndarray]
    feature_names: List[str]
    confounders: List[str]
    m_hat: np.ndarray
    e_hat: np.ndarray
    x_res: np.ndarray
    y_res: np.ndarray
    z_train: np.ndarray
    config: CausalForestConfig
    oob: Optional[CatePrediction] = None

    @property
    def n_groups(self) -> int:
        return len(self.half_samples)


def _tree_rows(n: int, group: int, k: int, half: np.ndarray, config: CausalForestConfig):
    rng = np.random.default_rng([config.seed, group, k])
    size = min(max(2, int(config.subsample_fraction * n)), len(half))
    rows = rng.choice(half, size=size, replace=False)
    n_struct = int(config.honesty_fraction * size)
    if n_struct < 1 or n_struct >= size:
        raise BadConfig(f"Honesty split of a {size}-row subsample leaves an empty half")
    return rows[:n_struct], rows[n_struct:], rng


def _grow_group(group: int, n: int, z, x_res, y_res, treated, config: CausalForestConfig):
    half = np.sort(np.random.default_rng([config.seed, group]).choice(n, size=n // 2, replace=False))
    trees = []
    for k in range(config.group_size):
        if group * config.group_size + k >= config.n_trees:
            break
        struct_rows, est_rows, rng = _tree_rows(n, group, k, half, config)
        trees.append(grow_honest_tree(z, x_res, y_res, treated, struct_rows, est_rows, config, rng))
    return half, trees


def _residualize(design, folds: FoldAssignment, nuisance: NuisanceConfig) -> Tuple[np.ndarray, np.ndarray]:
    m_hat = np.empty(len(design.y))
    e_hat = np.empty(len(design.y))
    for fold in range(folds.k):
        train, test = folds.train_rows(fold), folds.test_rows(fold)
        m_hat[test] = fit_learner(nuisance.outcome, design.z[train], design.y[train], "squared").predict(design.z[test])
        e_hat[test] = fit_learner(nuisance.propensity, design.z[train], design.x[train], "logistic").predict(design.z[test])
    return m_hat, np.clip(e_hat, nuisance.clip, 1.0 - nuisance.clip)


def debias_variance(between: np.ndarray, noise: np.ndarray, count: np.ndarray) -> np.ndarray:
    """
    Objective-Bayes correction of between-bag variance for Monte-Carlo noise.

    The naive estimate between - noise is treated as Gaussian with scale
    max(between, noise) * sqrt(2 / count) around a true variance with a flat
    prior on [0, inf); the posterior mean is always positive and matches the
    naive estimate when the noise is small.
    """
    naive = between - noise
    scale = np.maximum(between, noise) * np.sqrt(2.0 / count)
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = naive / scale
        mills = np.exp(stats.norm.logpdf(ratio) - stats.norm.logcdf(ratio))
        posterior = naive + scale * mills
    return np.where(scale > 0, posterior, np.maximum(naive, 0.0))


def _aggregate(preds: np.ndarray, tree_group: np.ndarray, n_groups: int, group_size: int,
               valid_groups: Optional[np.ndarray] = None) -> CatePrediction:
    """
    Forest average and little-bags variance.

    preds is (n_trees, m); valid_groups (n_groups, m) masks bags per row (OOB).
    Variance: between-bag variance debiased for within-bag spread/(group_size - 1)
    by debias_variance; NaN with fewer than two full bags.
    """
    m = preds.shape[1]
    if valid_groups is None:
        valid_groups = np.ones((n_groups, m), dtype=bool)
    tree_valid = valid_groups[tree_group]
    uncovered = tree_valid.sum(axis=0) == 0
    tree_valid[:, uncovered] = True
    tau = np.sum(preds * tree_valid, axis=0) / tree_valid.sum(axis=0)

    sizes = np.bincount(tree_group, minlength=n_groups)
    full = np.flatnonzero(sizes == group_size)
    if group_size < 2 or len(full) < 2:
        return CatePrediction(tau_hat=tau, se=np.full(m, np.nan))

    group_means = np.stack([preds[tree_group == g].mean(axis=0) for g in full])
    within = np.stack([((preds[tree_group == g] - group_means[i]) ** 2).mean(axis=0) for i, g in enumerate(full)])
    mask = valid_groups[full].astype(float)
    mask[:, uncovered] = 1.0
    count = mask.sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        center = np.sum(mask * group_means, axis=0) / count
        between = np.sum(mask * (group_means - center) ** 2, axis=0) / count
        spread = np.sum(mask * within, axis=0) / count
        variance = debias_variance(between, spread / (group_size - 1), count)
        variance = np.where(count >= 2, variance, np.nan)
    return CatePrediction(tau_hat=tau, se=np.sqrt(variance))


def _tree_predictions(model: CateModel, features: np.ndarray, threads: int = 1) -> np.ndarray:
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        return np.stack(list(pool.map(lambda tree: tree.predict(features), model.trees)))


def fit_causal_forest(dataset: Dataset, folds: FoldAssignment, config: Optional[CausalForestConfig] = None,
                      nuisance: Optional[NuisanceConfig] = None, threads: int = 1) -> CateModel:
    """
    Fit an honest causal forest on (X, Z, Y); mediators are ignored.

    Args:
        dataset: Complete dataset with at least one confounder
        folds: Folds for the residualizing nuisances
        config: Forest settings
        nuisance: Learners for m(z) (outcome role) and e(z) (propensity role)
        threads: Worker threads for little bags

    Returns:
        CateModel with out-of-bag per-unit estimates

    Raises:
        SchemaError: If the schema has no confounders
        InsufficientVariation: If a group is too small or x~ has no variation
    """
    config = config or CausalForestConfig()
    nuisance = nuisance or NuisanceConfig()
    schema = dataset.schema
    if not schema.confounders:
        raise SchemaError("The causal forest needs at least one confounder")

    design = encode(dataset)
    n = dataset.n
    n_t = int(design.x.sum())
    n_c = n - n_t
    if n_t < 10 * config.min_leaf_treated or n_c < 10 * config.min_leaf_control:
        raise InsufficientVariation(
            f"Forest needs >= {10 * config.min_leaf_treated} treated and >= {10 * config.min_leaf_control} "
            f"control rows, got {n_t} and {n_c}"
        )

    m_hat, e_hat = _residualize(design, folds, nuisance)
    x_res = design.x - e_hat
    y_res = design.y - m_hat
    if np.sum(x_res ** 2) == 0:
        raise InsufficientVariation("Residualized protected attribute has no variation")

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        groups = list(pool.map(
            lambda g: _grow_group(g, n, design.z, x_res, y_res, design.x, config),
            range(config.n_groups),
        ))

    trees, tree_group, halves = [], [], []
    for g, (half, group_trees) in enumerate(groups):
        halves.append(half)
        trees.extend(group_trees)
        tree_group.extend([g] * len(group_trees))

    model = CateModel(
        trees=trees,
        tree_group=np.asarray(tree_group, dtype=np.int64),
        half_samples=halves,
        feature_names=list(design.z_names),
        confounders=[s.name for s in schema.confounders],
        m_hat=m_hat,
        e_hat=e_hat,
        x_res=x_res,
        y_res=y_res,
        z_train=design.z,
        config=config,
    )

    in_half = np.zeros((model.n_groups, n), dtype=bool)
    for g, half in enumerate(halves):
        in_half[g, half] = True
    preds = _tree_predictions(model, design.z, threads)
    model.oob = _aggregate(preds, model.tree_group, model.n_groups, config.group_size, valid_groups=~in_half)
    return model


def _features_for(model: CateModel, z_rows: Union[Dataset, pd.DataFrame, np.ndarray]) -> np.ndarray:
    if isinstance(z_rows, Dataset):
        specs = [z_rows.schema[name] for name in model.confounders if name in z_rows.schema]
        if len(specs) != len(model.confounders):
            raise SchemaMismatch(f"Dataset lacks confounders {model.confounders}")
        features, names, _ = encode_block(z_rows, specs)
        if names != model.feature_names:
            raise SchemaMismatch(f"Encoded features {names} differ from training features {model.feature_names}")
        return features
    if isinstance(z_rows, pd.DataFrame):
        if list(z_rows.columns) != model.feature_names:
            raise SchemaMismatch(f"Columns {list(z_rows.columns)} differ from training features {model.feature_names}")
        return z_rows.to_numpy(dtype=float)
    features = np.asarray(z_rows, dtype=float)
    if features.ndim == 1:
        features = features.reshape(1, -1)
    if features.shape[1] != len(model.feature_names):
        raise SchemaMismatch(f"Expected {len(model.feature_names)} feature columns, got {features.shape[1]}")
    return features


def predict_cate(model: CateModel, z_rows: Union[Dataset, pd.DataFrame, np.ndarray], threads: int = 1) -> CatePrediction:
    """
    Forest-average tau(z) with little-bags pointwise standard errors.

    Raises:
        SchemaMismatch: If feature columns differ from the training schema
    """
    features = _features_for(model, z_rows)
    preds = _tree_predictions(model, features, threads)
    return _aggregate(preds, model.tree_group, model.n_groups, model.config.group_size)


def average_treatment_effect(model: CateModel) -> Estimate:
    """Doubly robust ATE from out-of-bag estimates: mean of tau + x~/(e(1-e)) (y~ - tau x~)."""
    tau = model.oob.tau_hat
    e = model.e_hat
    scores = tau + model.x_res / (e * (1.0 - e)) * (model.y_res - tau * model.x_res)
    return mean_estimate(scores)


# ==================== IMPORTANCE & TABLES ====================

def variable_importance(model: CateModel, max_depth: int = 4, decay: float = 2.0) -> Dict[str, float]:
    """
    Depth-discounted split frequency: sum over trees and depths d <= max_depth of
    (splits on the feature at depth d) * d^-decay, normalized to sum to 1.

    Falls back to uniform weights with a NoSplitWarning when no tree split.
    """
    scores = np.zeros(len(model.feature_names))
    for tree in model.trees:
        internal = tree.feature >= 0
        depth = tree.depth[internal] + 1
        keep = depth <= max_depth
        np.add.at(scores, tree.feature[internal][keep], depth[keep].astype(float) ** (-decay))
    total = scores.sum()
    if total <= 0:
        warnings.warn("Causal forest made no splits; importance is uniform", NoSplitWarning, stacklevel=2)
        scores = np.ones(len(model.feature_names))
        total = scores.sum()
    return dict(zip(model.feature_names, (scores / total).tolist()))


def importance_by_variable(model: CateModel, importance: Dict[str, float]) -> Dict[str, float]:
    """Sum feature weights over the indicator columns of each confounder."""
    out = {name: 0.0 for name in model.confounders}
    for feature, weight in importance.items():
        out[feature.split("=", 1)[0]] += weight
    return out


def _tau_for(model: CateModel, dataset: Dataset, tau_hat: Optional[np.ndarray]) -> np.ndarray:
    if tau_hat is not None:
        return np.asarray(tau_hat, dtype=float)
    return predict_cate(model, dataset).tau_hat


def _rename(rows: List[Dict]) -> pd.DataFrame:
    table = pd.DataFrame(rows).rename(columns={"estimate": "mean_cate", "se": "se_mean"})
    return table


def subgroup_cate_table(model: CateModel, dataset: Dataset, dimension: str,
                        tau_hat: Optional[np.ndarray] = None) -> pd.DataFrame:
    """
    Mean, sd and se of the mean of per-unit tau within each level of a discrete confounder.

    Raises:
        UnknownDimension: If dimension is not a discrete confounder
    """
    check_dimension(dataset.schema, dimension)
    return _rename(grouped_summary(_tau_for(model, dataset, tau_hat), dataset, [dimension], label="estimate"))


def cate_heatmap(model: CateModel, dataset: Dataset, dim1: str, dim2: str,
                 tau_hat: Optional[np.ndarray] = None) -> pd.DataFrame:
    """Per-cell tau summaries over dim1 x dim2; cells with n < 30 carry small_flag."""
    check_dimension(dataset.schema, dim1)
    check_dimension(dataset.schema, dim2)
    return _rename(grouped_summary(_tau_for(model, dataset, tau_hat), dataset, [dim1, dim2], label="estimate"))


@dataclass
class CateReport:
    ate: Estimate
    tau_hat: np.ndarray
    tau_se: np.ndarray
    subgroups: Dict[str, pd.DataFrame]
    heatmaps: Dict[str, pd.DataFrame]
    importance: Dict[str, float]
    importance_by_variable: Dict[str, float]
    no_split: bool = False
    small_cell_threshold: int = SMALL_CELL

    def to_dict(self) -> Dict:
        return {
            "ate": self.ate.to_dict(),
            "importance": self.importance,
            "importance_by_variable": self.importance_by_variable,
            "no_split": self.no_split,
            "subgroups": {k: v.to_dict(orient="records") for k, v in self.subgroups.items()},
            "heatmaps": {k: v.to_dict(orient="records") for k, v in self.heatmaps.items()},
            "small_cell_threshold": self.small_cell_threshold,
            "units": {"tau_hat": self.tau_hat.tolist(), "se": self.tau_se.tolist()},
        }


def build_cate_report(model: CateModel, dataset: Dataset, dims: Sequence[str],
                      heatmap_pairs: Sequence[Tuple[str, str]]) -> CateReport:
    """ATE, out-of-bag per-unit estimates, one-way tables, heatmaps and importance for the training data."""
    tau = model.oob.tau_hat
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", NoSplitWarning)
        importance = variable_importance(model)
    no_split = any(issubclass(w.category, NoSplitWarning) for w in caught)
    if no_split:
        warnings.warn("Causal forest made no splits; importance is uniform", NoSplitWarning, stacklevel=2)

    return CateReport(
        ate=average_treatment_effect(model),
        tau_hat=tau,
        tau_se=model.oob.se,
        subgroups={d: subgroup_cate_table(model, dataset, d, tau) for d in dims},
        heatmaps={f"{a}__{b}": cate_heatmap(model, dataset, a, b, tau) for a, b in heatmap_pairs},
        importance=importance,
        importance_by_variable=importance_by_variable(model, importance),
        no_split=no_split,
    )
