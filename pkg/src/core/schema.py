"""
Schema - Standard Fairness Model variable roles and kinds

One binary protected attribute X, confounders Z, mediators W and one
continuous outcome Y. Schemas are immutable once built.
"""

from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import yaml

from src.errors import SchemaError


class Role(str, Enum):
    PROTECTED = "protected"
    CONFOUNDER = "confounder"
    MEDIATOR = "mediator"
    OUTCOME = "outcome"


class Kind(str, Enum):
    BINARY = "binary"
    CATEGORICAL = "categorical"
    CONTINUOUS = "continuous"


@dataclass(frozen=True)
class VariableSpec:
    """
    One schema variable.

    Categorical variables carry their ordered levels and the reference level
    that dummy coding omits.
    """
    name: str
    role: Role
    kind: Kind
    levels: Tuple[str, ...] = ()
    reference: Optional[str] = None

    def __post_init__(self):
        if not self.name or not isinstance(self.name, str):
            raise SchemaError(f"Variable name must be a non-empty string, got {self.name!r}")
        object.__setattr__(self, "role", Role(self.role))
        object.__setattr__(self, "kind", Kind(self.kind))
        object.__setattr__(self, "levels", tuple(str(level) for level in self.levels))

        if self.kind == Kind.CATEGORICAL:
            if len(set(self.levels)) < 2 or len(set(self.levels)) != len(self.levels):
                raise SchemaError(f"{self.name}: categorical needs >= 2 distinct levels, got {list(self.levels)}")
            reference = self.levels[0] if self.reference is None else str(self.reference)
            if reference not in self.levels:
                raise SchemaError(f"{self.name}: reference {reference!r} not in levels {list(self.levels)}")
            object.__setattr__(self, "reference", reference)
        elif self.levels:
            raise SchemaError(f"{self.name}: only categorical variables declare levels")

        if self.role == Role.PROTECTED and self.kind != Kind.BINARY:
            raise SchemaError(f"{self.name}: the protected attribute must be binary")
        if self.role == Role.OUTCOME and self.kind != Kind.CONTINUOUS:
            raise SchemaError(f"{self.name}: the outcome must be continuous")

    @property
    def is_discrete(self) -> bool:
        return self.kind in (Kind.BINARY, Kind.CATEGORICAL)

    @property
    def dummy_levels(self) -> Tuple[str, ...]:
        """Levels that get an indicator column (all but the reference)."""
        return tuple(level for level in self.levels if level != self.reference)

    def domain(self) -> Tuple[str, ...]:
        """Ordered value labels of a discrete variable (binary as "0", "1")."""
        if self.kind == Kind.BINARY:
            return ("0", "1")
        return self.levels

    def to_dict(self) -> Dict:
        out = {"name": self.name, "role": self.role.value, "kind": self.kind.value}
        if self.kind == Kind.CATEGORICAL:
            out["levels"] = list(self.levels)
            out["reference"] = self.reference
        return out


@dataclass(frozen=True)
class SfmSchema:
    """Role-tagged variable list plus the labels of the two protected groups."""
    variables: Tuple[VariableSpec, ...]
    x0_label: str = "0"
    x1_label: str = "1"
    _by_name: Dict[str, VariableSpec] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        variables = tuple(self.variables)
        object.__setattr__(self, "variables", variables)
        object.__setattr__(self, "x0_label", str(self.x0_label))
        object.__setattr__(self, "x1_label", str(self.x1_label))

        names = [v.name for v in variables]
        duplicates = sorted({n for n in names if names.count(n) > 1})
        if duplicates:
            raise SchemaError(f"Duplicate variable names: {duplicates}")

        n_protected = sum(v.role == Role.PROTECTED for v in variables)
        n_outcome = sum(v.role == Role.OUTCOME for v in variables)
        if n_protected != 1:
            raise SchemaError(f"Exactly one protected variable required, found {n_protected}")
        if n_outcome != 1:
            raise SchemaError(f"Exactly one outcome variable required, found {n_outcome}")
        if self.x0_label == self.x1_label:
            raise SchemaError("x0_label and x1_label must differ")

        object.__setattr__(self, "_by_name", {v.name: v for v in variables})

    # ==================== ROLE ACCESSORS ====================

    @property
    def names(self) -> List[str]:
        return [v.name for v in self.variables]

    @property
    def protected(self) -> VariableSpec:
        return next(v for v in self.variables if v.role == Role.PROTECTED)

    @property
    def outcome(self) -> VariableSpec:
        return next(v for v in self.variables if v.role == Role.OUTCOME)

    @property
    def confounders(self) -> List[VariableSpec]:
        return [v for v in self.variables if v.role == Role.CONFOUNDER]

    @property
    def mediators(self) -> List[VariableSpec]:
        return [v for v in self.variables if v.role == Role.MEDIATOR]

    def __getitem__(self, name: str) -> VariableSpec:
        try:
            return self._by_name[name]
        except KeyError:
            raise KeyError(f"Unknown variable: {name!r}") from None

    def __contains__(self, name: str) -> bool:
        return name in self._by_name

    def to_dict(self) -> Dict:
        return {
            "x0_label": self.x0_label,
            "x1_label": self.x1_label,
            "variables": [v.to_dict() for v in self.variables],
        }


# ==================== YAML I/O ====================

def schema_from_dict(raw: Dict) -> SfmSchema:
    """
    Build a schema from its key/value tree.

    Args:
        raw: Mapping with 'variables' (list of name/role/kind[/levels/reference])
             and optional 'x0_label' / 'x1_label'.

    Returns:
        Validated SfmSchema

    Raises:
        SchemaError: If the tree is malformed or violates an invariant
    """
    if not isinstance(raw, dict) or not isinstance(raw.get("variables"), list):
        raise SchemaError("Schema must be a mapping with a 'variables' list")

    variables = []
    for i, item in enumerate(raw["variables"]):
        if not isinstance(item, dict):
            raise SchemaError(f"variables[{i}] must be a mapping")
        try:
            variables.append(VariableSpec(
                name=item["name"],
                role=Role(str(item["role"]).lower()),
                kind=Kind(str(item["kind"]).lower()),
                levels=tuple(item.get("levels", ())),
                reference=item.get("reference"),
            ))
        except KeyError as exc:
            raise SchemaError(f"variables[{i}] is missing key {exc}") from exc
        except ValueError as exc:
            if isinstance(exc, SchemaError):
                raise
            raise SchemaError(f"variables[{i}]: {exc}") from exc

    return SfmSchema(
        variables=tuple(variables),
        x0_label=raw.get("x0_label", "0"),
        x1_label=raw.get("x1_label", "1"),
    )


def read_schema(path: Union[str, Path]) -> SfmSchema:
    """Load a YAML schema file."""
    path = Path(path)
    if not path.exists():
        raise SchemaError(f"Schema file not found: {path}")
    with open(path, "r", encoding="utf-8") as f:
        raw = yaml.safe_load(f) or {}
    return schema_from_dict(raw)


def write_schema(schema: SfmSchema, path: Union[str, Path]) -> Path:
    """Write a schema as YAML."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        yaml.safe_dump(schema.to_dict(), f, sort_keys=False, allow_unicode=True)
    return path


def default_schema() -> SfmSchema:
    """The shipped schema template (ADHD / STEM outcome coding)."""
    template = Path(__file__).resolve().parent.parent / "templates" / "schema_template.yaml"
    return read_schema(template)
