"""
Serialization - Deterministic JSON/CSV rendering of pipeline results

NaN and infinities become JSON null. JSON floats use the shortest round-trip
repr and CSV floats 17 significant digits; both read back to the identical
double, so identical results always give byte-identical files.
"""

import dataclasses
import hashlib
import json
import math
from enum import Enum
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd


def to_jsonable(obj: Any) -> Any:
    """Recursively convert results (dataclasses, numpy, pandas, enums) into JSON-ready values."""
    if hasattr(obj, "to_dict") and not isinstance(obj, (pd.DataFrame, pd.Series)):
        return to_jsonable(obj.to_dict())
    if isinstance(obj, Enum):
        return obj.value
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, pd.DataFrame):
        return [to_jsonable(row) for row in obj.to_dict(orient="records")]
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        value = float(obj)
        return value if math.isfinite(value) else None
    if isinstance(obj, Path):
        return str(obj)
    if dataclasses.is_dataclass(obj):
        return to_jsonable(dataclasses.asdict(obj))
    return obj


def dumps(obj: Any) -> str:
    """Indented JSON text with a trailing newline."""
    return json.dumps(to_jsonable(obj), indent=2, ensure_ascii=False, allow_nan=False) + "\n"


def canonical_json(obj: Any) -> str:
    """Key-sorted compact JSON, the input of config hashes."""
    return json.dumps(to_jsonable(obj), sort_keys=True, separators=(",", ":"), allow_nan=False)


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def frame_to_csv(frame: pd.DataFrame, config_hash: str) -> str:
    """CSV text with a trailing config_hash column; missing values are empty cells."""
    out = frame.copy()
    out["config_hash"] = config_hash
    return out.to_csv(index=False, lineterminator="\n", na_rep="", float_format="%.17g")
