"""
Learners - logistic/linear (IRLS, ridge) and gradient-boosted trees
"""

import numpy as np

from .config import Family, LearnerConfig, logistic_defaults
from .gbt import GbtModel, fit_gbt
from .logistic import ConstantModel, LinearModel, LogisticModel, fit_linear, fit_logistic


def fit_learner(config: LearnerConfig, features: np.ndarray, targets: np.ndarray, loss: str):
    """
    Dispatch on config.family and loss.

    With no feature columns the model is the constant mean of the targets
    (a probability for logistic loss).
    """
    features = np.asarray(features, dtype=float)
    if features.ndim == 2 and features.shape[1] == 0:
        return ConstantModel(float(np.mean(targets)))
    if config.family == Family.LOGISTIC_LINEAR:
        return fit_logistic(features, targets, config) if loss == "logistic" else fit_linear(features, targets, config)
    return fit_gbt(features, targets, loss, config)


__all__ = [
    'Family', 'LearnerConfig', 'logistic_defaults', 'GbtModel', 'fit_gbt', 'ConstantModel',
    'LinearModel', 'LogisticModel', 'fit_linear', 'fit_logistic', 'fit_learner',
]
