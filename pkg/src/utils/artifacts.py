"""
Artifacts - Output-directory store for JSON and CSV results

Every write is confined to the output directory and reports back a
{success, path, error} dict instead of raising.
"""

import hashlib
from pathlib import Path
from typing import Any, Dict, List, Union

import pandas as pd

from src.utils.serialization import dumps, frame_to_csv


class ArtifactStore:
    """
    Writes artifacts under one output directory and remembers their hashes.

    JSON payloads get a config_hash key, CSV tables a config_hash column.
    """

    def __init__(self, out_dir: Union[str, Path], config_hash: str):
        self.out_dir = Path(out_dir).resolve()
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.config_hash = config_hash
        self.written: Dict[str, str] = {}

    def _safe_path(self, name: Union[str, Path]) -> Path:
        """
        Resolve an artifact name inside the output directory.

        Raises:
            PermissionError: If the path escapes the output directory
        """
        candidate = Path(name)
        full_path = candidate.resolve() if candidate.is_absolute() else (self.out_dir / candidate).resolve()
        try:
            full_path.relative_to(self.out_dir)
        except ValueError:
            raise PermissionError(
                f"🚫 Refusing to write '{name}': path is outside the output directory {self.out_dir}"
            )
        return full_path

    def _write(self, name: str, text: str) -> Dict[str, Any]:
        try:
            path = self._safe_path(name)
            path.parent.mkdir(parents=True, exist_ok=True)
            data = text.encode("utf-8")
            path.write_bytes(data)
            digest = hashlib.sha256(data).hexdigest()
            self.written[path.relative_to(self.out_dir).as_posix()] = digest
            return {"success": True, "path": str(path), "sha256": digest, "error": None}
        except (PermissionError, OSError) as e:
            return {"success": False, "path": None, "sha256": None, "error": str(e)}

    def write_json(self, name: str, payload: Dict) -> Dict[str, Any]:
        body = {"config_hash": self.config_hash, **payload}
        return self._write(name, dumps(body))

    def write_csv(self, name: str, frame: pd.DataFrame) -> Dict[str, Any]:
        return self._write(name, frame_to_csv(frame, self.config_hash))

    def write_text(self, name: str, text: str) -> Dict[str, Any]:
        return self._write(name, text)

    def artifact_names(self) -> List[str]:
        return sorted(self.written)

    def write_manifest(self, extra: Dict) -> Dict[str, Any]:
        """manifest.json: config hash, the given metadata and a SHA-256 per artifact (no timestamps)."""
        artifacts = {name: self.written[name] for name in self.artifact_names() if name != "manifest.json"}
        return self.write_json("manifest.json", {**extra, "artifacts": artifacts})
