"""
Nuisance - cross-fitted outcome, propensity, mediator-odds and nested regressions
"""

from src.learners import LearnerConfig, fit_gbt, fit_linear, fit_logistic

from .cross_fit import NuisanceConfig, NuisanceFits, cross_fit, saturated_fits
from .strata import StrataIndex, plugin_functionals, positivity_gaps, strata_index

__all__ = [
    'LearnerConfig', 'fit_gbt', 'fit_linear', 'fit_logistic', 'NuisanceConfig', 'NuisanceFits',
    'cross_fit', 'saturated_fits', 'StrataIndex', 'plugin_functionals', 'positivity_gaps',
    'strata_index',
]
