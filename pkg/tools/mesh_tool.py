"""Mesh Tools: extract the zero level set from a checkpoint and score meshes against ground truth."""
from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Dict, List, Optional

from pydantic import Field

from tools.base import ReconTool, check_output_file
from utils.errors import ValidationError
from utils.fields import field_from_payload
from utils.mesher import crop_mesh, extract_mesh, load_mesh, save_mesh
from utils.metrics import GeometryReport, eval_mesh, write_reports
from utils.trainer import checkpoint_transform, load_checkpoint


class ExtractMeshTool(ReconTool):
    """Marching cubes over the checkpoint's SDF, written in scene units."""

    name: str = "extract"
    description: str = "Extract the SDF zero level set of a checkpoint as a PLY mesh in scene units."

    resolution: Optional[int] = Field(default=None, description="Grid resolution; default from the checkpoint config")
    chunk: int = Field(default=64, description="Grid block edge evaluated at once")
    overwrite: bool = Field(default=False, description="Replace an existing mesh file")

    def run(self, checkpoint: Path, out_mesh: Path) -> Dict[str, Any]:
        out_mesh = check_output_file(Path(out_mesh), self.overwrite)
        payload = load_checkpoint(Path(checkpoint))
        resolution = self.resolution or int(payload["config"].get("mesh_resolution", 256))
        manifest, started = self.start_manifest(
            seed=int(payload["config"].get("seed", 0)), scene=payload.get("scene_name"),
            config={"resolution": resolution, "chunk": self.chunk}, inputs={"checkpoint": str(checkpoint)},
        )
        mesh = extract_mesh(field_from_payload(payload["field"]), resolution,
                            transform=checkpoint_transform(payload), chunk=self.chunk)
        save_mesh(mesh, out_mesh)
        out = {
            "mesh": str(out_mesh),
            "vertices": int(len(mesh.vertices)),
            "faces": int(len(mesh.faces)),
            "iteration": int(payload["iteration"]),
        }
        manifest.finish(started, **out).write(out_mesh.parent)
        return out


def scene_regions(scene_dir: Path) -> Dict[str, List[List[float]]]:
    """Evaluation regions recorded with a synthetic scene (empty for captured scenes)."""
    meta_path = Path(scene_dir) / "synthetic.json"
    if not meta_path.exists():
        return {}
    return json.loads(meta_path.read_text(encoding="utf-8")).get("regions", {})


class EvalMeshTool(ReconTool):
    """Accuracy / completeness / precision / recall / F-score against a reference mesh."""

    name: str = "eval_mesh"
    description: str = "Compare a predicted mesh with a GT mesh; writes geometry.csv and geometry.txt."

    threshold: float = Field(default=0.05, description="Distance threshold tau in scene units")
    n_samples: int = Field(default=200000, description="Surface samples per mesh")
    seed: int = Field(default=0, description="Sampling seed")

    def run(self, pred_mesh: Path, gt_mesh: Path, out_dir: Optional[Path] = None,
            regions: Optional[Dict[str, List[List[float]]]] = None) -> Dict[str, Any]:
        pred = load_mesh(Path(pred_mesh))
        gt = load_mesh(Path(gt_mesh))
        out_dir = Path(out_dir) if out_dir is not None else Path(pred_mesh).parent
        manifest, started = self.start_manifest(
            seed=self.seed, config={"threshold": self.threshold, "n_samples": self.n_samples, "regions": regions or {}},
            inputs={"pred_mesh": str(pred_mesh), "gt_mesh": str(gt_mesh)},
        )

        reports: Dict[str, GeometryReport] = {"all": eval_mesh(pred, gt, self.threshold, self.n_samples, self.seed)}
        for name, region in (regions or {}).items():
            if len(region) != 2:
                raise ValidationError(f"region {name!r} must be [[min x, y, z], [max x, y, z]]")
            reports[name] = eval_mesh(crop_mesh(pred, region), crop_mesh(gt, region), self.threshold,
                                      self.n_samples, self.seed)
        files = write_reports(reports, out_dir, "geometry")
        out = {"reports": {k: r.row() for k, r in reports.items()}, **files}
        manifest.finish(started, **files).write(out_dir)
        return out


def create_extract_tool(resolution: Optional[int] = None, chunk: int = 64, overwrite: bool = False) -> ExtractMeshTool:
    return ExtractMeshTool(resolution=resolution, chunk=chunk, overwrite=overwrite)


def create_eval_mesh_tool(threshold: float = 0.05, n_samples: int = 200000, seed: int = 0) -> EvalMeshTool:
    return EvalMeshTool(threshold=threshold, n_samples=n_samples, seed=seed)
