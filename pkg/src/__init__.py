"""Causal fairness analysis under the Standard Fairness Model."""

__version__ = "0.3.0"
