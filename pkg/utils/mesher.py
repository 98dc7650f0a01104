"""Zero-level-set extraction (marching cubes over a chunked SDF grid) and mesh cropping."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

# Ensure project root is on sys.path so that `utils.*` works when run as a script.
ROOT = Path(__file__).resolve().parent.parent
if str(ROOT) not in sys.path:
    sys.path.append(str(ROOT))

import mcubes
import numpy as np
import torch
import trimesh

from utils.errors import MeshExtractionError, ValidationError
from utils.fields import FieldBase
from utils.renderer import field_dtype_device
from utils.scene_data import SimilarityTransform

logger = logging.getLogger(__name__)

UNIT_BOUNDS = np.array([[-1.0, -1.0, -1.0], [1.0, 1.0, 1.0]])


def extract_fields(field: FieldBase, bound_min: np.ndarray, bound_max: np.ndarray, resolution: int,
                   chunk: int = 64) -> np.ndarray:
    """SDF sampled on a resolution^3 grid spanning [bound_min, bound_max], evaluated block by block."""
    dtype, device = field_dtype_device(field)
    axes = [torch.linspace(float(bound_min[k]), float(bound_max[k]), resolution, dtype=dtype, device=device) for k in range(3)]
    X, Y, Z = (a.split(chunk) for a in axes)
    u = np.zeros([resolution, resolution, resolution], dtype=np.float32)
    with torch.no_grad():
        for xi, xs in enumerate(X):
            for yi, ys in enumerate(Y):
                for zi, zs in enumerate(Z):
                    xx, yy, zz = torch.meshgrid(xs, ys, zs, indexing="ij")
                    pts = torch.stack([xx, yy, zz], dim=-1).reshape(-1, 3)
                    val = field.geometry(pts)[0].reshape(len(xs), len(ys), len(zs))
                    u[xi * chunk: xi * chunk + len(xs), yi * chunk: yi * chunk + len(ys), zi * chunk: zi * chunk + len(zs)] = (
                        val.detach().cpu().numpy()
                    )
    return u


def empty_mesh() -> trimesh.Trimesh:
    return trimesh.Trimesh(vertices=np.zeros((0, 3)), faces=np.zeros((0, 3), dtype=np.int64), process=False)


def extract_mesh(field: FieldBase, resolution: int = 256, bounds: Optional[np.ndarray] = None,
                 transform: Optional[SimilarityTransform] = None, chunk: int = 64) -> trimesh.Trimesh:
    """Mesh of {sdf = 0} inside `bounds` (normalized units), mapped back through `transform`."""
    if resolution < 16:
        raise ValidationError("mesh resolution must be >= 16")
    bounds = UNIT_BOUNDS if bounds is None else np.asarray(bounds, dtype=np.float64).reshape(2, 3)
    if np.any(np.abs(bounds) > 1.0 + 1e-6) or np.any(bounds[1] <= bounds[0]):
        raise ValidationError("mesh bounds must be a non-empty box inside [-1, 1]^3")
    try:
        u = extract_fields(field, bounds[0], bounds[1], resolution, chunk)
    except torch.cuda.OutOfMemoryError as e:
        raise MeshExtractionError(f"out of memory at resolution {resolution}; lower the chunk size (now {chunk})") from e
    if not np.all(np.isfinite(u)):
        raise MeshExtractionError("sdf grid contains non-finite values")
    if u.min() > 0.0 or u.max() < 0.0:
        logger.warning("no zero crossing in the sdf grid; returning an empty mesh")
        return empty_mesh()

    vertices, triangles = mcubes.marching_cubes(-u, 0.0)
    vertices = vertices / (resolution - 1.0) * (bounds[1] - bounds[0])[None, :] + bounds[0][None, :]
    if transform is not None:
        vertices = transform.apply_inverse(vertices)
    mesh = trimesh.Trimesh(vertices=vertices, faces=triangles.astype(np.int64), process=False)
    validate_mesh(mesh)
    logger.info("extracted mesh: %d vertices, %d faces", len(mesh.vertices), len(mesh.faces))
    return mesh


def validate_mesh(mesh: trimesh.Trimesh) -> trimesh.Trimesh:
    faces = np.asarray(mesh.faces)
    if faces.size and (faces.min() < 0 or faces.max() >= len(mesh.vertices)):
        raise MeshExtractionError("face index out of range")
    if not np.all(np.isfinite(mesh.vertices)):
        raise MeshExtractionError("mesh has non-finite vertices")
    return mesh


def crop_mesh(mesh: trimesh.Trimesh, region: Sequence[Sequence[float]], outside: bool = False) -> trimesh.Trimesh:
    """Drop faces with no vertex inside the axis-aligned `region` ([min, max]).

    With `outside`, keep the complement instead: faces with no vertex inside the region.
    """
    lo, hi = np.asarray(region, dtype=np.float64).reshape(2, 3)
    if len(mesh.faces) == 0:
        return empty_mesh()
    inside = np.all((mesh.vertices >= lo) & (mesh.vertices <= hi), axis=-1)
    keep = inside[mesh.faces].any(axis=-1)
    if outside:
        keep = ~keep
    if not keep.any():
        return empty_mesh()
    cropped = trimesh.Trimesh(vertices=mesh.vertices.copy(), faces=mesh.faces[keep], process=False)
    cropped.remove_unreferenced_vertices()
    return cropped


def save_mesh(mesh: trimesh.Trimesh, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    mesh.export(path)
    return path


def load_mesh(path: Path) -> trimesh.Trimesh:
    if not Path(path).exists():
        raise ValidationError(f"mesh not found: {path}")
    loaded = trimesh.load(path, force="mesh", process=False)
    if not isinstance(loaded, trimesh.Trimesh):
        return empty_mesh()
    return loaded


def main() -> None:
    from utils.trainer import checkpoint_transform, load_checkpoint
    from utils.fields import field_from_payload

    parser = argparse.ArgumentParser(description="Extract a mesh from a training checkpoint")
    parser.add_argument("checkpoint", type=Path)
    parser.add_argument("out_mesh", type=Path)
    parser.add_argument("--resolution", type=int, default=256)
    args = parser.parse_args()

    logging.basicConfig(level=logging.INFO)
    payload = load_checkpoint(args.checkpoint)
    mesh = extract_mesh(field_from_payload(payload["field"]), args.resolution, transform=checkpoint_transform(payload))
    save_mesh(mesh, args.out_mesh)
    print(json.dumps({"status": "ok", "mesh": str(args.out_mesh), "faces": int(len(mesh.faces))}))


if __name__ == "__main__":
    main()
