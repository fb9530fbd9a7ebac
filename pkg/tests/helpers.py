"""
Test helpers - small schemas and SCMs built inline
"""

import numpy as np

from src.core.schema import Kind, Role, SfmSchema, VariableSpec
from src.learners import LearnerConfig
from src.scm.spec import scm_from_dict

LINEAR = LearnerConfig(family="logistic_linear")


def make_schema(confounders=(), mediators=(), x0_label="0", x1_label="1"):
    """Schema with protected x, outcome y and the given (name, kind[, levels]) confounders/mediators."""
    variables = [VariableSpec("x", Role.PROTECTED, Kind.BINARY)]
    for role, items in ((Role.CONFOUNDER, confounders), (Role.MEDIATOR, mediators)):
        for item in items:
            name, kind, *rest = item
            variables.append(VariableSpec(name, role, kind, levels=tuple(rest[0]) if rest else ()))
    variables.append(VariableSpec("y", Role.OUTCOME, Kind.CONTINUOUS))
    return SfmSchema(tuple(variables), x0_label=x0_label, x1_label=x1_label)


def binary_confounder_spec(name, seed, x_intercept=0.0, x_effect=0.0, xz=None, z_names=("z1",),
                           mediators=None, sigma=1.0):
    """SCM over binary confounders z_names with an outcome shift x_effect (+ x*z terms)."""
    return scm_from_dict({
        "name": name,
        "seed": seed,
        "confounders": {"mode": "independent",
                        "variables": [{"name": z, "kind": "binary", "p": 0.5} for z in z_names]},
        "protected": {"name": "x", "intercept": x_intercept, "z": {z_names[0]: 0.2}},
        "mediators": mediators or [],
        "outcome": {"name": "y", "intercept": 0.1, "x": x_effect, "z": {z: 0.3 for z in z_names},
                    "xz": xz or {}, "sigma": sigma},
    })


def constant_effect_spec(effect=0.5, p_x=0.5, seed=5):
    """Binary/categorical confounders, no mediators, outcome shift `effect` for X = 1."""
    intercept = float(np.log(p_x / (1 - p_x)))
    return scm_from_dict({
        "name": "constant-effect",
        "seed": seed,
        "confounders": {"mode": "independent", "variables": [
            {"name": "female", "kind": "binary", "p": 0.5},
            {"name": "ses", "kind": "categorical", "levels": ["Q1", "Q2", "Q3"], "probs": [0.3, 0.4, 0.3]},
        ]},
        "protected": {"name": "x", "intercept": intercept, "z": {"female": 0.3, "ses": {"Q3": -0.3}}},
        "outcome": {"name": "y", "intercept": 0.1, "x": effect, "z": {"female": 0.2, "ses": {"Q2": 0.3, "Q3": 0.6}},
                    "sigma": 1.0},
    })
