"""Content-addressed artifact directories and run manifests"""
import json
import logging
import os
import shutil
import sys
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Union

import numpy as np
import pandas as pd

from .const import DEFAULT_OUTPUT_DIR, OUTPUT_DIR_ENV
from .file_hash import get_file_hash

_LOGGER = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"
_FLOAT_FORMAT = "%.10g"


def default_output_dir() -> Path:
    return Path(os.environ.get(OUTPUT_DIR_ENV, DEFAULT_OUTPUT_DIR))


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


@dataclass
class RunManifest:
    command: str
    config_path: str
    seed: int
    version: str
    input_hashes: Dict[str, str]
    """Input file path -> md5"""

    output_dir: str
    config_hash: str = ""
    argv: List[str] = field(default_factory=list)
    started: str = field(default_factory=_now)
    finished: str = ""
    status: str = ""
    summary: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def hash_inputs(paths: Sequence[Union[str, Path]]) -> Dict[str, str]:
    return {str(path): get_file_hash(path) for path in paths if Path(path).is_file()}


def _plain(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}

    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]

    if isinstance(value, np.ndarray):
        return [_plain(v) for v in value.tolist()]

    if isinstance(value, (np.floating, np.integer, np.bool_)):
        return value.item()

    return value


class ArtifactStorage:
    """One directory per run: <root>/<experiment>/<config-hash>/"""

    def __init__(self, root_dir: Union[str, Path], experiment: str, config_hash: str):
        self.storage_dir = Path(root_dir) / experiment / config_hash
        self.staging_dir = self.storage_dir.with_name(f".{config_hash}.partial")
        self.experiment = experiment
        self.config_hash = config_hash

    def __enter__(self) -> "ArtifactStorage":
        if self.staging_dir.exists():
            shutil.rmtree(self.staging_dir)

        self.staging_dir.mkdir(parents=True)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        if exc_type is not None:
            # no partial outputs
            shutil.rmtree(self.staging_dir, ignore_errors=True)
            return

        if self.storage_dir.exists():
            shutil.rmtree(self.storage_dir)

        self.staging_dir.rename(self.storage_dir)
        _LOGGER.debug("Artifacts in %s", self.storage_dir)

    def _path(self, file_name: str) -> Path:
        return self.staging_dir / file_name

    def save_table(self, name: str, frame: pd.DataFrame) -> str:
        file_id = f"{name}.csv"
        frame.to_csv(self._path(file_id), index=False, float_format=_FLOAT_FORMAT, encoding="utf-8")
        _LOGGER.debug("Saved table: %s", file_id)
        return file_id

    def save_json(self, name: str, data: Mapping[str, Any]) -> str:
        file_id = f"{name}.json"
        with open(self._path(file_id), "w", encoding="utf-8") as json_file:
            json.dump(_plain(data), json_file, indent=2, sort_keys=True)

        _LOGGER.debug("Saved summary: %s", file_id)
        return file_id

    def save_log(self, name: str, lines: Sequence[Mapping[str, Any]]) -> str:
        file_id = f"{name}.jsonl"
        with open(self._path(file_id), "w", encoding="utf-8") as log_file:
            for entry in lines:
                print(json.dumps(_plain(entry), sort_keys=True), file=log_file)

        return file_id

    def save_manifest(self, manifest: RunManifest) -> str:
        manifest.finished = _now()
        manifest.output_dir = str(self.storage_dir)
        manifest.config_hash = self.config_hash
        return self.save_json(MANIFEST_NAME[: -len(".json")], manifest.to_dict())

    def get_file_path(self, file_id: str) -> Optional[Path]:
        for directory in (self.storage_dir, self.staging_dir):
            file_path = directory / file_id
            if file_path.exists():
                return file_path

        return None


def print_summary(summary: Mapping[str, Any]) -> None:
    """Structured summary on stdout"""
    json.dump(_plain(summary), sys.stdout, indent=2, sort_keys=True)
    print("", file=sys.stdout)
