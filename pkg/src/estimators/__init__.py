"""
Estimators - decomposition, causal forest, ctf-DE, sensitivity and balance
"""

from .balance import BalanceTable, balance_table, format_balance, smd_binary_level, smd_continuous
from .cate_forest import (
    CateModel, CateReport, CausalForestConfig, build_cate_report, fit_causal_forest, predict_cate,
    variable_importance,
)
from .common import Estimate
from .ctf_de import (
    CtfDeReport, aggregate_cells, build_ctf_de_report, ctf_de_by_cell, ctf_de_by_dimension,
    ctf_de_overall, ctf_de_pseudo_outcomes,
)
from .decomposition import (
    DecompositionReport, Estimator, debiased_decomposition, format_decomposition, plugin_model,
    plugin_strata, tv_empirical,
)
from .sensitivity import (
    SensitivityReport, TrimmingCurve, bias_bound, fit_sensitivity_model, format_sensitivity,
    robustness_value, rv_grid_oracle, rv_grid_search, trimming_curve,
)

__all__ = [
    'BalanceTable', 'balance_table', 'format_balance', 'smd_binary_level', 'smd_continuous',
    'CateModel', 'CateReport', 'CausalForestConfig', 'build_cate_report', 'fit_causal_forest',
    'predict_cate', 'variable_importance', 'Estimate', 'CtfDeReport', 'aggregate_cells',
    'build_ctf_de_report', 'ctf_de_by_cell', 'ctf_de_by_dimension', 'ctf_de_overall',
    'ctf_de_pseudo_outcomes', 'DecompositionReport', 'Estimator', 'debiased_decomposition',
    'format_decomposition', 'plugin_model', 'plugin_strata', 'tv_empirical', 'SensitivityReport',
    'TrimmingCurve', 'bias_bound', 'fit_sensitivity_model', 'format_sensitivity', 'robustness_value',
    'rv_grid_oracle', 'rv_grid_search', 'trimming_curve',
]
