"""
Gradient-boosted trees - histogram-based second-order boosting for squared and logistic loss

Each stage fits a regression tree to the gradients/hessians of the loss,
with split gain G_L^2/(H_L+lambda) + G_R^2/(H_R+lambda) - G^2/(H+lambda)
and leaf value -G/(H+lambda). Feature values are bucketed once into at most
max_bins quantile bins, so fitting is deterministic given data and config.
"""

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from src.learners.config import LearnerConfig

PROB_CLAMP = 1e-6
MIN_GAIN = 1e-12
LOSSES = ("squared", "logistic")


def _sigmoid(t: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-t))


# ==================== BINNING ====================

def bin_edges(column: np.ndarray, max_bins: int) -> np.ndarray:
    """Split points for one feature: midpoints of distinct values, or quantiles when there are too many."""
    distinct = np.unique(column)
    if len(distinct) <= max_bins:
        return (distinct[:-1] + distinct[1:]) / 2.0
    quantiles = np.quantile(column, np.linspace(0.0, 1.0, max_bins + 1)[1:-1])
    return np.unique(quantiles)


def _binned(features: np.ndarray, edges: List[np.ndarray]) -> np.ndarray:
    """Bin index per cell: the number of edges <= value."""
    out = np.empty(features.shape, dtype=np.int64)
    for j, e in enumerate(edges):
        out[:, j] = np.searchsorted(e, features[:, j], side="right")
    return out


# ==================== TREE ====================

@dataclass
class RegressionTree:
    """Array-encoded binary tree; feature -1 marks a leaf. Rows with value < threshold go left."""
    feature: List[int] = field(default_factory=list)
    threshold: List[float] = field(default_factory=list)
    left: List[int] = field(default_factory=list)
    right: List[int] = field(default_factory=list)
    value: List[float] = field(default_factory=list)
    depth: int = 0

    def _add_leaf(self, value: float) -> int:
        self.feature.append(-1)
        self.threshold.append(np.nan)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(value)
        return len(self.feature) - 1

    def finalize(self):
        self.feature = np.asarray(self.feature, dtype=np.int64)
        self.threshold = np.asarray(self.threshold, dtype=float)
        self.left = np.asarray(self.left, dtype=np.int64)
        self.right = np.asarray(self.right, dtype=np.int64)
        self.value = np.asarray(self.value, dtype=float)

    def predict(self, features: np.ndarray) -> np.ndarray:
        node = np.zeros(features.shape[0], dtype=np.int64)
        for _ in range(self.depth):
            feat = self.feature[node]
            rows = np.flatnonzero(feat >= 0)
            if len(rows) == 0:
                break
            current = node[rows]
            go_left = features[rows, feat[rows]] < self.threshold[current]
            node[rows] = np.where(go_left, self.left[current], self.right[current])
        return self.value[node]


class _TreeBuilder:
    def __init__(self, bins: np.ndarray, edges: List[np.ndarray], config: LearnerConfig):
        self.bins = bins
        self.edges = edges
        self.config = config
        self.n_bins = np.array([len(e) + 1 for e in edges], dtype=np.int64)
        self.offsets = np.concatenate([[0], np.cumsum(self.n_bins)[:-1]]).astype(np.int64)
        self.total_bins = int(self.n_bins.sum())

    def _leaf_value(self, g_sum: float, h_sum: float) -> float:
        return -g_sum / (h_sum + self.config.reg_lambda)

    def _best_split(self, rows: np.ndarray, grad: np.ndarray, hess: np.ndarray):
        lam = self.config.reg_lambda
        min_leaf = self.config.min_leaf
        if len(rows) < 2 * min_leaf or self.bins.shape[1] == 0:
            return None

        flat = (self.bins[rows] + self.offsets).ravel()
        n_features = self.bins.shape[1]
        g_hist = np.bincount(flat, weights=np.repeat(grad[rows], n_features), minlength=self.total_bins)
        h_hist = np.bincount(flat, weights=np.repeat(hess[rows], n_features), minlength=self.total_bins)
        c_hist = np.bincount(flat, minlength=self.total_bins)

        g_total, h_total = grad[rows].sum(), hess[rows].sum()
        parent = g_total ** 2 / (h_total + lam)
        best = None
        best_gain = MIN_GAIN
        for j in range(n_features):
            lo, hi = self.offsets[j], self.offsets[j] + self.n_bins[j]
            if hi - lo < 2:
                continue
            g_left = np.cumsum(g_hist[lo:hi])[:-1]
            h_left = np.cumsum(h_hist[lo:hi])[:-1]
            c_left = np.cumsum(c_hist[lo:hi])[:-1]
            c_right = len(rows) - c_left
            gain = 0.5 * (g_left ** 2 / (h_left + lam)
                          + (g_total - g_left) ** 2 / (h_total - h_left + lam) - parent)
            gain = np.where((c_left >= min_leaf) & (c_right >= min_leaf), gain, -np.inf)
            b = int(np.argmax(gain))
            if gain[b] > best_gain:
                best_gain = float(gain[b])
                best = (j, b)
        return best

    def build(self, grad: np.ndarray, hess: np.ndarray) -> RegressionTree:
        tree = RegressionTree(depth=self.config.max_depth)
        self._grow(tree, np.arange(len(grad)), grad, hess, 0)
        tree.finalize()
        return tree

    def _grow(self, tree: RegressionTree, rows: np.ndarray, grad, hess, depth: int) -> int:
        split = None
        if depth < self.config.max_depth:
            split = self._best_split(rows, grad, hess)
        if split is None:
            return tree._add_leaf(self._leaf_value(grad[rows].sum(), hess[rows].sum()))

        j, b = split
        node = tree._add_leaf(0.0)
        tree.feature[node] = j
        tree.threshold[node] = float(self.edges[j][b])
        go_left = self.bins[rows, j] <= b
        tree.left[node] = self._grow(tree, rows[go_left], grad, hess, depth + 1)
        tree.right[node] = self._grow(tree, rows[~go_left], grad, hess, depth + 1)
        return node


# ==================== BOOSTING ====================

@dataclass(frozen=True)
class GbtModel:
    """Boosted ensemble; predict returns means (squared) or clamped probabilities (logistic)."""
    loss: str
    base_score: float
    learning_rate: float
    trees: tuple

    def raw_predict(self, features: np.ndarray) -> np.ndarray:
        features = np.asarray(features, dtype=float)
        if features.ndim == 1:
            features = features.reshape(-1, 1)
        out = np.full(features.shape[0], self.base_score)
        for tree in self.trees:
            out += self.learning_rate * tree.predict(features)
        return out

    def predict(self, features: np.ndarray) -> np.ndarray:
        raw = self.raw_predict(features)
        if self.loss == "logistic":
            return np.clip(_sigmoid(raw), PROB_CLAMP, 1.0 - PROB_CLAMP)
        return raw


def fit_gbt(features: np.ndarray, targets: np.ndarray, loss: str = "squared",
            config: Optional[LearnerConfig] = None) -> GbtModel:
    """
    Fit a gradient-boosted tree ensemble.

    Args:
        features: (n, p) float matrix
        targets: Real targets (squared) or 0/1 labels (logistic)
        loss: "squared" or "logistic"
        config: Tree settings (n_trees, max_depth, learning_rate, min_leaf, reg_lambda, max_bins)

    Returns:
        GbtModel
    """
    config = config or LearnerConfig()
    if loss not in LOSSES:
        raise ValueError(f"Unknown loss {loss!r}; expected one of {LOSSES}")

    features = np.asarray(features, dtype=float)
    if features.ndim == 1:
        features = features.reshape(-1, 1)
    targets = np.asarray(targets, dtype=float)

    edges = [bin_edges(features[:, j], config.max_bins) for j in range(features.shape[1])]
    builder = _TreeBuilder(_binned(features, edges), edges, config)

    if loss == "squared":
        base = float(np.mean(targets))
    else:
        rate = float(np.clip(np.mean(targets), PROB_CLAMP, 1.0 - PROB_CLAMP))
        base = float(np.log(rate / (1.0 - rate)))

    raw = np.full(len(targets), base)
    trees = []
    for _ in range(config.n_trees):
        if loss == "squared":
            grad = raw - targets
            hess = np.ones_like(raw)
        else:
            p = _sigmoid(raw)
            grad = p - targets
            hess = p * (1.0 - p)
        tree = builder.build(grad, hess)
        trees.append(tree)
        raw += config.learning_rate * tree.predict(features)

    return GbtModel(loss=loss, base_score=base, learning_rate=config.learning_rate, trees=tuple(trees))
