"""Shared base for pipeline commands: pydantic-configured, `run()` returns a JSON-able dict."""
from __future__ import annotations

import json
import logging
import shutil
import sys
import time
from pathlib import Path
from typing import Any, Dict

from pydantic import BaseModel, ConfigDict

# Ensure project root import
ROOT = Path(__file__).resolve().parent.parent
if str(ROOT) not in sys.path:
    sys.path.append(str(ROOT))

from utils.errors import ReconError, ValidationError
from utils.run_manifest import MANIFEST_NAME, RunManifest

logger = logging.getLogger(__name__)


class ReconTool(BaseModel):
    """A pipeline step. Fields are its settings; `run(**inputs)` does the work."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    name: str = "recon_tool"
    description: str = ""

    def run(self, **inputs: Any) -> Dict[str, Any]:
        raise NotImplementedError

    def invoke(self, **inputs: Any) -> str:
        """JSON string result; errors become `{"status": "error", "code", "message"}`."""
        try:
            return json.dumps({"status": "ok", **self.run(**inputs)}, ensure_ascii=False, default=str)
        except ReconError as e:
            return json.dumps({"status": "error", "code": e.code, "message": str(e)}, ensure_ascii=False)
        except Exception as e:
            return json.dumps({"status": "error", "code": "runtime", "message": f"Unexpected error: {e}"}, ensure_ascii=False)

    def start_manifest(self, seed: int = 0, **fields: Any) -> tuple[RunManifest, float]:
        return RunManifest(command=self.name, seed=seed, **fields), time.perf_counter()


def prepare_out_dir(out_dir: Path, overwrite: bool, keep_existing: bool = False) -> Path:
    """Create `out_dir`. A non-empty one needs `overwrite` (cleared first) unless `keep_existing`."""
    out_dir = Path(out_dir)
    if out_dir.exists() and not out_dir.is_dir():
        raise ValidationError(f"output path is not a directory: {out_dir}")
    if out_dir.exists() and any(out_dir.iterdir()) and not keep_existing:
        if not overwrite:
            raise ValidationError(f"output directory {out_dir} is not empty (use --overwrite)")
        logger.info("clearing %s", out_dir)
        shutil.rmtree(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    return out_dir


def check_output_file(path: Path, overwrite: bool) -> Path:
    path = Path(path)
    if path.exists() and not overwrite:
        raise ValidationError(f"{path} exists (use --overwrite)")
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


__all__ = ["ReconTool", "prepare_out_dir", "check_output_file", "MANIFEST_NAME"]
