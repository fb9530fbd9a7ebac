"""
Linear learners - L2-penalized logistic regression by IRLS and ridge least squares

The intercept is never penalized. Models are immutable after fit.
"""

import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from src.errors import Degenerate, NoConvergenceWarning
from src.learners.config import Family, LearnerConfig

PROB_FLOOR = 1e-12


def _with_intercept(features: np.ndarray) -> np.ndarray:
    features = np.asarray(features, dtype=float)
    if features.ndim == 1:
        features = features.reshape(-1, 1)
    return np.hstack([np.ones((features.shape[0], 1)), features])


def _penalty_mask(n_columns: int) -> np.ndarray:
    mask = np.ones(n_columns)
    mask[0] = 0.0
    return mask


def _solve(matrix: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.solve(matrix, rhs)
    except np.linalg.LinAlgError:
        return np.linalg.lstsq(matrix, rhs, rcond=None)[0]


# ==================== LOGISTIC ====================

def penalized_loglik(weights: np.ndarray, design: np.ndarray, labels: np.ndarray, l2_penalty: float) -> float:
    """sum(y*t - log(1 + e^t)) - l2/2 * ||slopes||^2 for a design that already holds the intercept column."""
    t = design @ weights
    mask = _penalty_mask(len(weights))
    return float(np.sum(labels * t - np.logaddexp(0.0, t)) - 0.5 * l2_penalty * np.sum(mask * weights ** 2))


def gradient(weights: np.ndarray, design: np.ndarray, labels: np.ndarray, l2_penalty: float) -> np.ndarray:
    """Analytic gradient of penalized_loglik."""
    p = 1.0 / (1.0 + np.exp(-(design @ weights)))
    return design.T @ (labels - p) - l2_penalty * _penalty_mask(len(weights)) * weights


def _neg_hessian(weights: np.ndarray, design: np.ndarray, l2_penalty: float) -> np.ndarray:
    p = 1.0 / (1.0 + np.exp(-(design @ weights)))
    curvature = p * (1.0 - p)
    return (design * curvature[:, None]).T @ design + l2_penalty * np.diag(_penalty_mask(len(weights)))


@dataclass(frozen=True)
class LogisticModel:
    """
    Fitted logistic regression.

    Attributes:
        weights: Intercept followed by slopes
        cov: Inverse penalized Hessian at the optimum (intercept first)
        converged: False when IRLS stopped at max_iter
    """
    weights: np.ndarray
    cov: np.ndarray
    converged: bool
    n_iter: int
    l2_penalty: float

    @property
    def intercept(self) -> float:
        return float(self.weights[0])

    @property
    def coef(self) -> np.ndarray:
        return self.weights[1:]

    @property
    def se(self) -> np.ndarray:
        """Standard errors of intercept and slopes."""
        return np.sqrt(np.clip(np.diag(self.cov), 0.0, None))

    def decision_function(self, features: np.ndarray) -> np.ndarray:
        return _with_intercept(features) @ self.weights

    def predict(self, features: np.ndarray) -> np.ndarray:
        """P(label = 1 | features), strictly inside (0, 1)."""
        p = 1.0 / (1.0 + np.exp(-self.decision_function(features)))
        return np.clip(p, PROB_FLOOR, 1.0 - PROB_FLOOR)


def fit_logistic(features: np.ndarray, labels: np.ndarray, config: Optional[LearnerConfig] = None) -> LogisticModel:
    """
    Fit an L2-penalized logistic regression by Newton/IRLS with step halving.

    A design with zero feature columns fits the intercept only.

    Args:
        features: (n, p) float matrix
        labels: 0/1 labels
        config: Uses l2_penalty, max_iter and tol

    Returns:
        LogisticModel (best iterate, converged=False with a NoConvergenceWarning at max_iter)

    Raises:
        Degenerate: If only one label class is present
    """
    config = config or LearnerConfig(family=Family.LOGISTIC_LINEAR)
    labels = np.asarray(labels, dtype=float)
    present = np.unique(labels)
    if len(present) < 2:
        raise Degenerate(f"Logistic fit needs both classes, only saw {present.tolist()}")

    design = _with_intercept(features)
    lam = config.l2_penalty
    weights = np.zeros(design.shape[1])
    rate = labels.mean()
    weights[0] = np.log(rate / (1.0 - rate))
    loglik = penalized_loglik(weights, design, labels, lam)

    converged = False
    n_iter = 0
    for n_iter in range(1, config.max_iter + 1):
        step = _solve(_neg_hessian(weights, design, lam), gradient(weights, design, labels, lam))
        scale = 1.0
        for _ in range(30):
            candidate = weights + scale * step
            new_loglik = penalized_loglik(candidate, design, labels, lam)
            if new_loglik >= loglik - 1e-12 * abs(loglik):
                break
            scale *= 0.5
        change = np.max(np.abs(candidate - weights))
        weights, improvement, loglik = candidate, new_loglik - loglik, new_loglik
        if change < config.tol or abs(improvement) < config.tol * (abs(loglik) + config.tol):
            converged = True
            break

    if not converged:
        warnings.warn(
            f"Logistic IRLS did not converge in {config.max_iter} iterations",
            NoConvergenceWarning,
            stacklevel=2,
        )

    hessian = _neg_hessian(weights, design, lam)
    try:
        cov = np.linalg.inv(hessian)
    except np.linalg.LinAlgError:
        cov = np.linalg.pinv(hessian)
    return LogisticModel(weights=weights, cov=cov, converged=converged, n_iter=n_iter, l2_penalty=lam)


# ==================== LINEAR ====================

@dataclass(frozen=True)
class LinearModel:
    """Ridge least-squares fit; weights are intercept followed by slopes."""
    weights: np.ndarray

    @property
    def intercept(self) -> float:
        return float(self.weights[0])

    @property
    def coef(self) -> np.ndarray:
        return self.weights[1:]

    def predict(self, features: np.ndarray) -> np.ndarray:
        return _with_intercept(features) @ self.weights


def fit_linear(features: np.ndarray, targets: np.ndarray, config: Optional[LearnerConfig] = None) -> LinearModel:
    """Ridge regression with l2_penalty on the slopes (the logistic_linear family under squared loss)."""
    config = config or LearnerConfig(family=Family.LOGISTIC_LINEAR)
    design = _with_intercept(features)
    targets = np.asarray(targets, dtype=float)
    gram = design.T @ design + config.l2_penalty * np.diag(_penalty_mask(design.shape[1]))
    return LinearModel(weights=_solve(gram, design.T @ targets))


@dataclass(frozen=True)
class ConstantModel:
    """Predicts one value everywhere; stands in when a model has no features."""
    value: float

    def predict(self, features: np.ndarray) -> np.ndarray:
        return np.full(np.asarray(features).shape[0], self.value, dtype=float)
