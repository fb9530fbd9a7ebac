"""
SCM Spec - Parametric structural causal model obeying the SFM graph

Z -> X -> W -> Y with logistic mechanisms for X and for each binary mediator
(a chain in fixed order), a linear-Gaussian outcome with optional x*z
interactions, and Gaussian outcome noise of scale sigma.
"""

import copy
import itertools
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Tuple, Union

import numpy as np
import yaml

from src.core.schema import Kind, Role, SfmSchema, VariableSpec
from src.errors import ConfigError, NotEnumerable, UnknownStratum

# Coefficients on a confounder: a number for binary/continuous, level -> number for categorical
Coefs = Dict[str, Union[float, Dict[str, float]]]

REFERENCE_DIR = Path(__file__).resolve().parent.parent / "templates" / "scm"


def sigmoid(t):
    return 1.0 / (1.0 + np.exp(-np.asarray(t, dtype=float)))


@dataclass
class ConfounderVar:
    """One confounder. Binary uses p, categorical uses levels/probs, continuous uses mean/sd."""
    name: str
    kind: Kind
    p: float = 0.5
    levels: Tuple[str, ...] = ()
    probs: Tuple[float, ...] = ()
    mean: float = 0.0
    sd: float = 1.0

    def __post_init__(self):
        self.kind = Kind(self.kind)
        self.levels = tuple(str(level) for level in self.levels)
        self.probs = tuple(float(p) for p in self.probs)

    def domain(self) -> Tuple:
        if self.kind == Kind.BINARY:
            return (0.0, 1.0)
        if self.kind == Kind.CATEGORICAL:
            return self.levels
        raise NotEnumerable(f"{self.name}: continuous confounder cannot be enumerated")

    def to_variable_spec(self) -> VariableSpec:
        return VariableSpec(
            name=self.name, role=Role.CONFOUNDER, kind=self.kind,
            levels=self.levels if self.kind == Kind.CATEGORICAL else (),
            reference=self.levels[0] if self.kind == Kind.CATEGORICAL else None,
        )


@dataclass
class ConfounderDistribution:
    """
    Either independent generators ('independent') or a finite joint table ('table').

    Table strata are (values, probability) pairs over the declared variables.
    """
    mode: str
    variables: List[ConfounderVar]
    strata: List[Tuple[Dict[str, object], float]] = field(default_factory=list)

    @property
    def is_finite(self) -> bool:
        return all(v.kind != Kind.CONTINUOUS for v in self.variables)

    def enumerate(self) -> List[Tuple[Dict[str, object], float]]:
        """All confounder configurations with positive probability."""
        if self.mode == "table":
            return [(dict(values), prob) for values, prob in self.strata if prob > 0]
        if not self.is_finite:
            names = [v.name for v in self.variables if v.kind == Kind.CONTINUOUS]
            raise NotEnumerable(f"Continuous confounders {names} cannot be enumerated")

        per_var = []
        for var in self.variables:
            if var.kind == Kind.BINARY:
                per_var.append([(0.0, 1.0 - var.p), (1.0, var.p)])
            else:
                per_var.append(list(zip(var.levels, var.probs)))

        out = []
        for combo in itertools.product(*per_var):
            prob = float(np.prod([p for _, p in combo]))
            if prob > 0:
                out.append(({var.name: value for var, (value, _) in zip(self.variables, combo)}, prob))
        return out

    def sample(self, rng: np.random.Generator, n: int) -> Dict[str, np.ndarray]:
        """Draw n confounder rows (binary as float, categorical as labels)."""
        if self.mode == "table":
            probs = np.array([prob for _, prob in self.strata], dtype=float)
            idx = rng.choice(len(self.strata), size=n, p=probs / probs.sum())
            out = {}
            for var in self.variables:
                column = [self.strata[i][0][var.name] for i in idx]
                if var.kind == Kind.CATEGORICAL:
                    out[var.name] = np.array([str(v) for v in column], dtype=object)
                else:
                    out[var.name] = np.asarray(column, dtype=float)
            return out

        out = {}
        for var in self.variables:
            if var.kind == Kind.BINARY:
                out[var.name] = (rng.random(n) < var.p).astype(float)
            elif var.kind == Kind.CATEGORICAL:
                codes = rng.choice(len(var.levels), size=n, p=np.asarray(var.probs) / np.sum(var.probs))
                out[var.name] = np.asarray(var.levels, dtype=object)[codes]
            else:
                out[var.name] = var.mean + var.sd * rng.standard_normal(n)
        return out

    def check_support(self, z: Mapping[str, object]) -> Dict[str, np.ndarray]:
        """
        Validate one configuration and return it as length-1 columns.

        Raises:
            UnknownStratum: If z is outside the support
        """
        columns = {}
        for var in self.variables:
            if var.name not in z:
                raise UnknownStratum(f"Confounder {var.name!r} missing from {dict(z)}")
            value = z[var.name]
            if var.kind == Kind.BINARY:
                if value not in (0, 1):
                    raise UnknownStratum(f"{var.name}={value!r} outside {{0,1}}")
                columns[var.name] = np.array([float(value)])
            elif var.kind == Kind.CATEGORICAL:
                if str(value) not in var.levels:
                    raise UnknownStratum(f"{var.name}={value!r} not in levels {list(var.levels)}")
                columns[var.name] = np.array([str(value)], dtype=object)
            else:
                columns[var.name] = np.array([float(value)])

        if self.mode == "table":
            key = _stratum_key(z, self.variables)
            if key not in {_stratum_key(values, self.variables) for values, prob in self.strata if prob > 0}:
                raise UnknownStratum(f"Configuration {dict(z)} has zero probability")
        return columns


def _stratum_key(values: Mapping[str, object], variables: List[ConfounderVar]) -> Tuple:
    key = []
    for var in variables:
        value = values[var.name]
        key.append(str(value) if var.kind == Kind.CATEGORICAL else float(value))
    return tuple(key)


def z_linear(coefs: Coefs, columns: Mapping[str, np.ndarray], n: int) -> np.ndarray:
    """Linear predictor contribution of the confounders."""
    total = np.zeros(n)
    for name, coef in coefs.items():
        values = columns[name]
        if isinstance(coef, dict):
            for level, c in coef.items():
                total = total + float(c) * (values == str(level))
        else:
            total = total + float(coef) * values.astype(float)
    return total


@dataclass
class LogisticMechanism:
    """P(node=1 | x, z, earlier mediators) = sigmoid(intercept + x*beta_x + z-terms + w-terms)."""
    name: str
    intercept: float = 0.0
    x: float = 0.0
    z: Coefs = field(default_factory=dict)
    w: Dict[str, float] = field(default_factory=dict)

    def prob(self, x, zcols: Mapping[str, np.ndarray], wcols: Mapping[str, np.ndarray], n: int) -> np.ndarray:
        t = self.intercept + self.x * np.asarray(x, dtype=float) + z_linear(self.z, zcols, n)
        for name, coef in self.w.items():
            t = t + float(coef) * wcols[name]
        return sigmoid(t)


@dataclass
class OutcomeMechanism:
    """E[Y | x, w, z] = intercept + beta_x*x + w-terms + z-terms + x*(xz-terms); noise N(0, sigma^2)."""
    name: str
    intercept: float = 0.0
    x: float = 0.0
    w: Dict[str, float] = field(default_factory=dict)
    z: Coefs = field(default_factory=dict)
    xz: Coefs = field(default_factory=dict)
    sigma: float = 1.0

    def mean(self, x, zcols: Mapping[str, np.ndarray], wcols: Mapping[str, np.ndarray], n: int) -> np.ndarray:
        x = np.asarray(x, dtype=float) * np.ones(n)
        mu = self.intercept + self.x * x + z_linear(self.z, zcols, n) + x * z_linear(self.xz, zcols, n)
        for name, coef in self.w.items():
            mu = mu + float(coef) * wcols[name]
        return mu


@dataclass
class ScmSpec:
    """Full parametric SCM plus the seed that drives sampling."""
    name: str
    seed: int
    z_dist: ConfounderDistribution
    x_model: LogisticMechanism
    w_models: List[LogisticMechanism]
    y_model: OutcomeMechanism
    x0_label: str = "0"
    x1_label: str = "1"

    def __post_init__(self):
        seen = set()
        z_names = {v.name for v in self.z_dist.variables}
        for mech in [self.x_model] + list(self.w_models) + [self.y_model]:
            unknown = set(mech.z) - z_names
            if unknown:
                raise ConfigError(f"{mech.name}: coefficients on unknown confounders {sorted(unknown)}")
        for mech in self.w_models:
            late = set(mech.w) - seen
            if late:
                raise ConfigError(f"{mech.name}: mediator terms {sorted(late)} are not earlier in the chain")
            seen.add(mech.name)
        if set(self.y_model.w) - seen:
            raise ConfigError(f"outcome: unknown mediators {sorted(set(self.y_model.w) - seen)}")
        if self.y_model.sigma < 0:
            raise ConfigError("outcome sigma must be >= 0")

    @property
    def chain_order(self) -> List[str]:
        return [m.name for m in self.w_models]

    def schema(self) -> SfmSchema:
        """SfmSchema implied by this spec."""
        variables = [VariableSpec(self.x_model.name, Role.PROTECTED, Kind.BINARY)]
        variables += [v.to_variable_spec() for v in self.z_dist.variables]
        variables += [VariableSpec(m.name, Role.MEDIATOR, Kind.BINARY) for m in self.w_models]
        variables.append(VariableSpec(self.y_model.name, Role.OUTCOME, Kind.CONTINUOUS))
        return SfmSchema(tuple(variables), x0_label=self.x0_label, x1_label=self.x1_label)

    def with_overrides(self, **changes) -> "ScmSpec":
        data = {k: getattr(self, k) for k in self.__dataclass_fields__}
        data.update(changes)
        return ScmSpec(**data)


def schema_for(spec: ScmSpec) -> SfmSchema:
    return spec.schema()


# ==================== YAML I/O ====================

def _mechanism(raw: Dict, cls):
    if not isinstance(raw, dict) or "name" not in raw:
        raise ConfigError(f"Mechanism must be a mapping with a name, got {raw!r}")
    return cls(**raw)


def scm_from_dict(raw: Dict) -> ScmSpec:
    """Build a spec from its YAML key/value tree."""
    try:
        z_raw = raw.get("confounders", {"mode": "independent", "variables": []})
        variables = [ConfounderVar(**v) for v in z_raw.get("variables", [])]
        strata = [(dict(s["values"]), float(s["prob"])) for s in z_raw.get("strata", [])]
        mode = z_raw.get("mode", "independent")
        if mode not in ("independent", "table"):
            raise ConfigError(f"Unknown confounder mode {mode!r}")
        if mode == "table":
            total = sum(p for _, p in strata)
            if not strata or abs(total - 1.0) > 1e-9:
                raise ConfigError(f"Table strata probabilities must sum to 1, got {total}")

        protected = dict(raw["protected"])
        x0_label = str(protected.pop("x0_label", "0"))
        x1_label = str(protected.pop("x1_label", "1"))
        if float(protected.get("x", 0.0)) != 0.0 or protected.get("w"):
            raise ConfigError("The protected mechanism depends on confounders only; drop its 'x' and 'w' terms")

        return ScmSpec(
            name=str(raw.get("name", "custom")),
            seed=int(raw["seed"]),
            z_dist=ConfounderDistribution(mode=mode, variables=variables, strata=strata),
            x_model=_mechanism(protected, LogisticMechanism),
            w_models=[_mechanism(m, LogisticMechanism) for m in raw.get("mediators", [])],
            y_model=_mechanism(raw["outcome"], OutcomeMechanism),
            x0_label=x0_label,
            x1_label=x1_label,
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"Invalid SCM spec: {exc}") from exc


def scm_to_dict(spec: ScmSpec) -> Dict:
    def var_dict(v: ConfounderVar) -> Dict:
        out = {"name": v.name, "kind": v.kind.value}
        if v.kind == Kind.BINARY:
            out["p"] = v.p
        elif v.kind == Kind.CATEGORICAL:
            out["levels"] = list(v.levels)
            out["probs"] = list(v.probs)
        else:
            out.update(mean=v.mean, sd=v.sd)
        return out

    def mech_dict(m) -> Dict:
        return copy.deepcopy({k: getattr(m, k) for k in m.__dataclass_fields__})

    confounders = {"mode": spec.z_dist.mode, "variables": [var_dict(v) for v in spec.z_dist.variables]}
    if spec.z_dist.mode == "table":
        confounders["strata"] = [{"values": values, "prob": prob} for values, prob in spec.z_dist.strata]

    protected = mech_dict(spec.x_model)
    protected.update(x0_label=spec.x0_label, x1_label=spec.x1_label)
    return {
        "name": spec.name,
        "seed": spec.seed,
        "confounders": confounders,
        "protected": protected,
        "mediators": [mech_dict(m) for m in spec.w_models],
        "outcome": mech_dict(spec.y_model),
    }


def load_scm_spec(path_or_name: Union[str, Path]) -> ScmSpec:
    """
    Load a spec from a YAML path or a reference name ("desk-1", "null-1").

    Raises:
        ConfigError: If the file is missing or malformed
    """
    candidate = Path(path_or_name)
    if not candidate.exists():
        candidate = REFERENCE_DIR / f"{path_or_name}.yaml"
    if not candidate.exists():
        raise ConfigError(f"SCM spec not found: {path_or_name}")
    with open(candidate, "r", encoding="utf-8") as f:
        raw = yaml.safe_load(f) or {}
    return scm_from_dict(raw)


def dump_scm_spec(spec: ScmSpec, path: Optional[Union[str, Path]] = None) -> str:
    text = yaml.safe_dump(scm_to_dict(spec), sort_keys=False, allow_unicode=True)
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


def reference_spec(name: str) -> ScmSpec:
    """Shipped reference specs: 'desk-1' and 'null-1'."""
    path = REFERENCE_DIR / f"{name}.yaml"
    if not path.exists():
        raise ConfigError(f"Unknown reference spec {name!r}")
    return load_scm_spec(path)
