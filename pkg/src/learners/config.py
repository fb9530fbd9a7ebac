"""
Learner configuration - hyperparameters shared by the logistic/linear and tree learners
"""

from dataclasses import asdict, dataclass
from enum import Enum
from typing import Dict, Optional

from src.errors import BadConfig


class Family(str, Enum):
    LOGISTIC_LINEAR = "logistic_linear"
    GRADIENT_BOOSTED_TREES = "gbt"


@dataclass(frozen=True)
class LearnerConfig:
    """
    One learner's settings.

    Tree fields apply to the gbt family, l2_penalty/max_iter/tol to logistic_linear.
    """
    family: Family = Family.GRADIENT_BOOSTED_TREES
    n_trees: int = 100
    max_depth: int = 3
    learning_rate: float = 0.1
    min_leaf: int = 20
    reg_lambda: float = 1.0
    max_bins: int = 256
    l2_penalty: float = 1.0
    max_iter: int = 100
    tol: float = 1e-8

    def __post_init__(self):
        try:
            object.__setattr__(self, "family", Family(self.family))
        except ValueError:
            raise BadConfig(f"Unknown learner family {self.family!r}") from None

        problems = []
        if self.n_trees < 1:
            problems.append(f"n_trees must be >= 1, got {self.n_trees}")
        if self.max_depth < 1:
            problems.append(f"max_depth must be >= 1, got {self.max_depth}")
        if not 0 < self.learning_rate <= 1:
            problems.append(f"learning_rate must be in (0, 1], got {self.learning_rate}")
        if self.min_leaf < 1:
            problems.append(f"min_leaf must be >= 1, got {self.min_leaf}")
        if self.reg_lambda < 0:
            problems.append(f"reg_lambda must be >= 0, got {self.reg_lambda}")
        if self.max_bins < 2:
            problems.append(f"max_bins must be >= 2, got {self.max_bins}")
        if self.l2_penalty < 0:
            problems.append(f"l2_penalty must be >= 0, got {self.l2_penalty}")
        if self.max_iter < 1:
            problems.append(f"max_iter must be >= 1, got {self.max_iter}")
        if self.tol <= 0:
            problems.append(f"tol must be > 0, got {self.tol}")
        if problems:
            raise BadConfig("; ".join(problems))

    @classmethod
    def from_dict(cls, raw: Optional[Dict], **defaults) -> "LearnerConfig":
        data = dict(defaults)
        data.update(raw or {})
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise BadConfig(f"Unknown learner settings: {sorted(unknown)}")
        return cls(**data)

    def to_dict(self) -> Dict:
        out = asdict(self)
        out["family"] = self.family.value
        return out


def logistic_defaults() -> LearnerConfig:
    return LearnerConfig(family=Family.LOGISTIC_LINEAR)
