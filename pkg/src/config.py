"""
Config - Pipeline configuration loaded from YAML plus command-line overrides

Relative paths in a config file are resolved against the file's directory.
"""

import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import yaml

from src.errors import BadConfig, ConfigError
from src.estimators.cate_forest import CausalForestConfig
from src.nuisance.cross_fit import NuisanceConfig
from src.utils.serialization import canonical_json, sha256_text

KNOWN_KEYS = {
    "schema", "data", "scm", "n", "seed", "folds", "clip", "impute", "learners", "forest",
    "subgroups", "heatmaps", "trimming", "sensitivity", "bootstrap", "out", "threads",
}
DEFAULT_SCM_ROWS = 20000


def default_threads() -> int:
    """CFA_THREADS from the environment, else 1."""
    raw = os.getenv("CFA_THREADS", "").strip()
    if not raw:
        return 1
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigError(f"CFA_THREADS must be an integer, got {raw!r}")


@dataclass(frozen=True)
class PipelineConfig:
    """Resolved pipeline settings; exactly one of data and scm is set."""
    seed: int
    schema: Optional[str] = None
    data: Optional[str] = None
    scm: Optional[str] = None
    n: int = DEFAULT_SCM_ROWS
    folds: int = 10
    clip: float = 0.01
    impute: str = "none"
    learners: NuisanceConfig = field(default_factory=NuisanceConfig)
    forest: CausalForestConfig = field(default_factory=CausalForestConfig)
    subgroups: Optional[List[str]] = None
    heatmaps: List[Tuple[str, str]] = field(default_factory=list)
    trimming: List[float] = field(default_factory=lambda: [1, 2, 3, 4, 5])
    q: float = 1.0
    alpha: float = 0.05
    bootstrap: int = 200
    out: str = "results"
    threads: int = 1

    def to_dict(self) -> Dict:
        return {
            "schema": self.schema,
            "data": self.data,
            "scm": self.scm,
            "n": self.n,
            "seed": self.seed,
            "folds": self.folds,
            "clip": self.clip,
            "impute": self.impute,
            "learners": self.learners.to_dict(),
            "forest": asdict(self.forest),
            "subgroups": self.subgroups,
            "heatmaps": [list(pair) for pair in self.heatmaps],
            "trimming": list(self.trimming),
            "sensitivity": {"q": self.q, "alpha": self.alpha},
            "bootstrap": self.bootstrap,
            "out": self.out,
            "threads": self.threads,
        }

    @property
    def config_hash(self) -> str:
        """SHA-256 of the canonical config, ignoring the output directory and thread count."""
        body = self.to_dict()
        body.pop("out")
        body.pop("threads")
        return sha256_text(canonical_json(body))


def _resolve(value: Optional[str], base: Optional[Path]) -> Optional[str]:
    if value is None or base is None:
        return value
    path = Path(value)
    return str(path if path.is_absolute() else base / path)


def _heatmaps(raw) -> List[Tuple[str, str]]:
    pairs = []
    for item in raw or []:
        if not isinstance(item, (list, tuple)) or len(item) != 2:
            raise ConfigError(f"heatmaps entries must be [dim1, dim2] pairs, got {item!r}")
        pairs.append((str(item[0]), str(item[1])))
    return pairs


def config_from_dict(raw: Dict, base: Optional[Path] = None) -> PipelineConfig:
    """
    Validate a raw mapping into a PipelineConfig.

    Raises:
        ConfigError: On unknown keys, a missing seed, both or neither of data/scm,
                     or invalid learner/forest settings
    """
    unknown = set(raw) - KNOWN_KEYS
    if unknown:
        raise ConfigError(f"Unknown config keys: {sorted(unknown)}")
    if raw.get("seed") is None:
        raise ConfigError("Config must set 'seed'")
    if (raw.get("data") is None) == (raw.get("scm") is None):
        raise ConfigError("Config must set exactly one of 'data' and 'scm'")
    if raw.get("data") is not None and raw.get("schema") is None:
        raise ConfigError("A 'data' file needs a 'schema' file")

    impute = str(raw.get("impute", "none"))
    if impute not in ("none", "simple"):
        raise ConfigError(f"impute must be 'none' or 'simple', got {impute!r}")

    sensitivity = raw.get("sensitivity") or {}
    scm = raw.get("scm")
    if scm is not None and (Path(str(scm)).suffix in (".yaml", ".yml")):
        scm = _resolve(str(scm), base)

    try:
        config = PipelineConfig(
            seed=int(raw["seed"]),
            schema=_resolve(raw.get("schema"), base),
            data=_resolve(raw.get("data"), base),
            scm=scm,
            n=int(raw.get("n", DEFAULT_SCM_ROWS)),
            folds=int(raw.get("folds", 10)),
            clip=float(raw.get("clip", 0.01)),
            impute=impute,
            learners=NuisanceConfig.from_dict(raw.get("learners"), clip=float(raw.get("clip", 0.01))),
            forest=CausalForestConfig.from_dict(raw.get("forest"), seed=int(raw["seed"])),
            subgroups=None if raw.get("subgroups") is None else [str(s) for s in raw["subgroups"]],
            heatmaps=_heatmaps(raw.get("heatmaps")),
            trimming=[float(p) for p in raw.get("trimming", [1, 2, 3, 4, 5])],
            q=float(sensitivity.get("q", 1.0)),
            alpha=float(sensitivity.get("alpha", 0.05)),
            bootstrap=int(raw.get("bootstrap", 200)),
            out=str(raw.get("out", "results")),
            threads=int(raw.get("threads") or default_threads()),
        )
    except BadConfig as e:
        raise ConfigError(str(e)) from e
    except (TypeError, ValueError) as e:
        raise ConfigError(f"Invalid config value: {e}") from e

    if config.n < 1:
        raise ConfigError(f"n must be positive, got {config.n}")
    if config.folds < 2:
        raise ConfigError(f"folds must be >= 2, got {config.folds}")
    if not 0 < config.alpha < 1:
        raise ConfigError(f"sensitivity.alpha must be in (0, 1), got {config.alpha}")
    if any(not 0 < p < 50 for p in config.trimming):
        raise ConfigError(f"trimming percentiles must lie in (0, 50), got {config.trimming}")
    return config


def load_pipeline_config(path: Optional[Union[str, Path]] = None, overrides: Optional[Dict] = None) -> PipelineConfig:
    """
    Read a YAML pipeline config and apply non-None overrides.

    Args:
        path: YAML file, or None to build from overrides alone
        overrides: Command-line values (seed, out, impute, threads, scm, n, ...)

    Raises:
        ConfigError: If the file is missing, malformed or invalid
    """
    raw: Dict = {}
    base = None
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"Config file not found: {path}")
        try:
            with open(path, "r", encoding="utf-8") as f:
                raw = yaml.safe_load(f) or {}
        except yaml.YAMLError as e:
            raise ConfigError(f"Config file {path} is not valid YAML: {e}") from e
        if not isinstance(raw, dict):
            raise ConfigError(f"Config file {path} must hold a mapping")
        base = path.resolve().parent

    for key, value in (overrides or {}).items():
        if value is not None:
            raw[key] = value
    if (overrides or {}).get("scm") is not None:
        raw.pop("data", None)
    return config_from_dict(raw, base)
