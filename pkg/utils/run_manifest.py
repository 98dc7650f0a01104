"""Per-output-directory run record: config, code version, seed, scene, outputs, timing."""
from __future__ import annotations

import json
import logging
import os
import platform
import subprocess
import time
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, Field

from utils import __version__

logger = logging.getLogger(__name__)

MANIFEST_NAME = "run_manifest.json"


def code_version() -> str:
    root = Path(__file__).resolve().parent.parent
    try:
        rev = subprocess.run(
            ["git", "rev-parse", "--short", "HEAD"], cwd=root, capture_output=True, text=True, timeout=5
        )
        if rev.returncode == 0 and rev.stdout.strip():
            return f"{__version__}+{rev.stdout.strip()}"
    except (OSError, subprocess.TimeoutExpired):
        pass
    return __version__


class RunManifest(BaseModel):
    command: str
    seed: int = 0
    scene: Optional[str] = None
    config: Dict[str, Any] = Field(default_factory=dict)
    inputs: Dict[str, str] = Field(default_factory=dict)
    outputs: Dict[str, Any] = Field(default_factory=dict)
    code_version: str = Field(default_factory=code_version)
    python: str = Field(default_factory=platform.python_version)
    started_at: str = Field(default_factory=lambda: datetime.now(timezone.utc).isoformat())
    finished_at: Optional[str] = None
    elapsed_sec: Optional[float] = None
    status: str = "running"
    history: List[Dict[str, Any]] = Field(default_factory=list, description="earlier commands in this directory")

    def finish(self, started: float, status: str = "ok", **outputs: Any) -> "RunManifest":
        self.outputs.update(outputs)
        self.finished_at = datetime.now(timezone.utc).isoformat()
        self.elapsed_sec = round(time.perf_counter() - started, 3)
        self.status = status
        return self

    def write(self, out_dir: Path) -> Path:
        """Replace the directory's single manifest; an earlier one is folded into `history`."""
        out_dir.mkdir(parents=True, exist_ok=True)
        path = out_dir / MANIFEST_NAME
        previous = read_manifest(out_dir)
        if previous is not None and previous.started_at != self.started_at:
            summary = previous.model_dump(include={"command", "status", "started_at", "finished_at", "outputs"})
            self.history = previous.history + [summary]
        tmp = path.with_suffix(".json.tmp")
        tmp.write_text(self.model_dump_json(indent=2), encoding="utf-8")
        os.replace(tmp, path)
        logger.debug("wrote %s", path)
        return path


def read_manifest(out_dir: Path) -> Optional[RunManifest]:
    path = Path(out_dir) / MANIFEST_NAME
    if not path.exists():
        return None
    return RunManifest.model_validate(json.loads(path.read_text(encoding="utf-8")))
