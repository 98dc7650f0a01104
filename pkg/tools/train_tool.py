"""Train Tool: fit the neural field to a scene directory and write checkpoints + scalar logs."""
from __future__ import annotations

from pathlib import Path
from typing import Any, Dict, Mapping, Optional

from pydantic import Field

from tools.base import ReconTool, prepare_out_dir
from utils.scene_data import load_scene
from utils.train_config import load_config
from utils.trainer import train


class TrainTool(ReconTool):
    """Two-phase training (all priors, then geometry-checked priors)."""

    name: str = "train"
    description: str = "Train an SDF + radiance field on a scene directory; writes checkpoints/ and logs/scalars.csv."

    overwrite: bool = Field(default=False, description="Clear a non-empty output directory")
    resume: bool = Field(default=False, description="Continue from the latest checkpoint in the output directory")
    stop_at: Optional[int] = Field(default=None, description="Stop at this iteration (checkpointed) instead of total_iters")
    progress: bool = Field(default=True, description="Show a progress bar")

    def run(self, scene_dir: Path, out_dir: Path, config_file: Optional[Path] = None,
            overrides: Optional[Mapping[str, str]] = None, seed: Optional[int] = None) -> Dict[str, Any]:
        overrides = dict(overrides or {})
        if seed is not None:
            overrides["seed"] = str(seed)
        config = load_config(config_file, overrides)
        scene = load_scene(scene_dir)
        out_dir = prepare_out_dir(Path(out_dir), self.overwrite, keep_existing=self.resume)
        (out_dir / "config.cfg").write_text(config.to_text(), encoding="utf-8")
        manifest, started = self.start_manifest(
            seed=config.seed, scene=scene.name, config=config.model_dump(),
            inputs={"scene_dir": str(scene_dir), "config_file": str(config_file) if config_file else ""},
        )
        manifest.write(out_dir)

        result = train(scene, config, out_dir, resume=self.resume, stop_at=self.stop_at, progress=self.progress)
        out = {
            "out_dir": str(out_dir),
            "iteration": result.state.iteration,
            "checkpoints": [str(p) for p in result.checkpoints],
            "scalars": str(out_dir / "logs" / "scalars.csv"),
            "mask_counts": result.state.mask.counts(),
            "final": result.final.row() if result.final else {},
        }
        manifest.finish(started, **out).write(out_dir)
        return out


def create_train_tool(overwrite: bool = False, resume: bool = False, stop_at: Optional[int] = None,
                      progress: bool = True) -> TrainTool:
    return TrainTool(overwrite=overwrite, resume=resume, stop_at=stop_at, progress=progress)
