"""
Errors - Exception hierarchy shared by every pipeline step

InputError subclasses signal bad inputs (CLI exit 2), EstimationError
subclasses signal that an estimator could not produce a result (CLI exit 3).
"""

from typing import List, Sequence, Tuple


class CfaError(Exception):
    """Root of all pipeline errors."""


# ==================== INPUT ERRORS ====================

class InputError(CfaError, ValueError):
    """Invalid schema, data, or configuration."""


class SchemaError(InputError):
    """Schema violates a VariableSpec/SfmSchema invariant."""


class DataFormatError(InputError):
    """A CSV cell could not be parsed for its declared kind."""


class MissingData(InputError):
    """Missing cells where a complete dataset is required."""

    def __init__(self, cells: Sequence[Tuple[str, int]]):
        self.cells = list(cells)
        preview = ", ".join(f"{name}[row {row}]" for name, row in self.cells[:5])
        more = f" (+{len(self.cells) - 5} more)" if len(self.cells) > 5 else ""
        super().__init__(
            f"MissingData: {len(self.cells)} missing cell(s): {preview}{more}. "
            f"Impute (--impute simple) or drop incomplete rows."
        )


class AllMissingColumn(InputError):
    """A column has no observed value to impute from."""


class BadFoldCount(InputError):
    """Fold count outside 2 <= k <= n."""


class BadConfig(InputError):
    """Learner or forest configuration violates its invariants."""


class SchemaMismatch(InputError):
    """Columns or features do not match the expected schema."""


class UnknownDimension(InputError):
    """Requested subgroup dimension is not a discrete confounder."""


class UnknownStratum(InputError):
    """Confounder configuration outside the SCM support."""


class NotEnumerable(InputError):
    """Exact enumeration requested for a continuous confounder."""


class ConfigError(InputError):
    """Pipeline configuration file is invalid."""


# ==================== ESTIMATION ERRORS ====================

class EstimationError(CfaError, RuntimeError):
    """An estimator could not produce a result."""


class Degenerate(EstimationError):
    """Only one label class present."""


class FoldCollapse(EstimationError):
    """A training complement lacks an X group or a mediator level."""


class EmptyGroup(EstimationError):
    """One of the protected-attribute groups is empty."""


class EmptyStratum(EstimationError):
    """A stratum needed by the plug-in formulas has no rows."""

    def __init__(self, cells: List[dict]):
        self.cells = cells
        preview = "; ".join(str(c) for c in cells[:5])
        more = f" (+{len(cells) - 5} more)" if len(cells) > 5 else ""
        super().__init__(f"EmptyStratum: positivity failure in {len(cells)} cell(s): {preview}{more}")


class InsufficientVariation(EstimationError):
    """Residualized treatment has no variation."""


class DegenerateModel(EstimationError):
    """Linear model has no residual degrees of freedom or a singular design."""


class ConstructionFailure(EstimationError):
    """Requested confounder strength cannot be constructed."""


class EmptyAfterTrim(EstimationError):
    """Trimming removed a whole group or every row."""


# ==================== WARNINGS ====================

class NoConvergenceWarning(UserWarning):
    """Iterative solver stopped at max_iter."""


class ExtremeWeightsWarning(UserWarning):
    """Some pseudo-outcome exceeds 50x the interquartile range."""


class ZeroSpreadWarning(UserWarning):
    """Both groups have zero spread but different means."""


class NoSplitWarning(UserWarning):
    """Forest completed no split; importance falls back to uniform."""
