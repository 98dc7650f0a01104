"""Scene Tool: generate a synthetic scene directory from a JSON spec."""
from __future__ import annotations

from pathlib import Path
from typing import Any, Dict, Optional

from pydantic import Field

from tools.base import ReconTool, prepare_out_dir
from utils.errors import ValidationError
from utils.synthetic import SyntheticSpec, load_spec, make_synthetic_scene, write_scene


class SyntheticSceneTool(ReconTool):
    """Ray-cast an analytic scene into posed images, normal priors and GT maps."""

    name: str = "make_synthetic"
    description: str = "Generate a synthetic posed-RGB scene with GT mesh, GT normals and (optionally corrupted) priors."

    overwrite: bool = Field(default=False, description="Clear a non-empty output directory")

    def run(self, spec_file: Path | None = None, out_dir: Path | None = None, seed: Optional[int] = None,
            spec: Optional[SyntheticSpec | Dict[str, Any]] = None) -> Dict[str, Any]:
        if out_dir is None:
            raise ValidationError("out_dir is required")
        if isinstance(spec, dict):
            try:
                spec = SyntheticSpec(**spec)
            except ValueError as e:
                raise ValidationError(f"invalid synthetic spec: {e}") from e
        if spec is None:
            if spec_file is None:
                raise ValidationError("spec_file or spec is required")
            spec = load_spec(Path(spec_file))
        if seed is not None:
            spec = spec.model_copy(update={"seed": seed})
        out_dir = prepare_out_dir(Path(out_dir), self.overwrite)
        manifest, started = self.start_manifest(
            seed=spec.seed, scene=spec.scene, config=spec.model_dump(),
            inputs={"spec_file": str(spec_file)} if spec_file else {},
        )

        scene = make_synthetic_scene(spec)
        write_scene(spec, out_dir, scene)
        valid = sum(int(v.valid_mask.sum()) for v in scene.views)
        corrupt = sum(int(v.corrupt_mask.sum()) for v in scene.views if v.corrupt_mask is not None)
        result = {
            "scene_dir": str(out_dir),
            "views": len(scene.views),
            "valid_prior_pixels": valid,
            "corrupt_prior_pixels": corrupt,
        }
        manifest.finish(started, **result).write(out_dir)
        return result


def create_scene_tool(overwrite: bool = False) -> SyntheticSceneTool:
    return SyntheticSceneTool(overwrite=overwrite)
