"""Analytic synthetic scenes: ray-cast images, exact GT normals/depth, corrupted priors.

Scenes:
  plane            textured ground plane z=0 seen from above (fronto-parallel views)
  sphere           sphere at the origin seen from an outer ring of cameras
  box_room         closed room, cameras on an inner ring looking across the room
  box_room_pillar  box_room plus a thin floor-to-ceiling pillar (label 2)

Labels: 0 = miss, 1 = room / main surface, 2 = pillar.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional, Tuple

# Ensure project root is on sys.path so that `utils.*` works when run as a script.
ROOT = Path(__file__).resolve().parent.parent
if str(ROOT) not in sys.path:
    sys.path.append(str(ROOT))

import numpy as np
import torch
from pydantic import BaseModel, Field
from scipy import ndimage
from scipy.spatial.transform import Rotation

from utils.errors import ValidationError
from utils.primitives import Box, Plane, Primitive, Room, Sphere, Union, intersect_labeled
from utils.scene_data import NORMALIZATION_MARGIN, CameraView, Scene, bounding_sphere, roi_points, save_scene
from utils.seeding import numpy_rng

logger = logging.getLogger(__name__)

PILLAR_LABEL = 2
_NOISE_TABLE_SIZE = 4096
_LIGHT_DIR = np.array([0.3, 0.5, 1.0]) / np.linalg.norm([0.3, 0.5, 1.0])
TEXTURES = ("noise", "noise_flat_ceiling", "flat")


class SyntheticSpec(BaseModel):
    scene: str = Field(default="box_room", description="plane | sphere | box_room | box_room_pillar")
    texture: str = Field(default="noise", description="noise | noise_flat_ceiling | flat")
    num_views: int = Field(default=24, ge=2)
    width: int = Field(default=64, ge=8)
    height: int = Field(default=48, ge=8)
    fov_deg: float = Field(default=75.0, gt=1.0, lt=170.0)
    seed: int = 0

    room_half_extents: Tuple[float, float, float] = (2.0, 2.0, 1.25)
    pillar_center: Tuple[float, float] = (1.2, 0.5)
    pillar_half_width: float = Field(default=0.1, gt=0.0)
    camera_radius: float = Field(default=0.8, gt=0.0)
    camera_height: float = 0.0
    look_down: float = Field(default=0.35, description="target height below the camera ring (room scenes)")
    sphere_radius: float = Field(default=0.5, gt=0.0)
    plane_extent: float = Field(default=1.5, gt=0.0)

    noise_cell: float = Field(default=0.12, gt=0.0, description="value-noise lattice spacing, scene units")
    noise_octaves: int = Field(default=4, ge=1)
    specular: float = Field(default=0.0, ge=0.0)

    corrupt_priors: bool = False
    corruption_sigma_px: float = Field(default=3.0, ge=0.0)
    corruption_angle_deg: float = Field(default=35.0, ge=0.0)
    corruption_dilate_px: int = Field(default=3, ge=0)


# ---------------------------------------------------------------------------
# cameras
# ---------------------------------------------------------------------------

def look_at(eye: np.ndarray, target: np.ndarray, up: np.ndarray = np.array([0.0, 0.0, 1.0])) -> Tuple[np.ndarray, np.ndarray]:
    """World-to-camera (R, t) for a camera at `eye` looking at `target` (x right, y down, z forward)."""
    eye = np.asarray(eye, dtype=np.float64)
    forward = np.asarray(target, dtype=np.float64) - eye
    forward /= np.linalg.norm(forward)
    if abs(forward @ up) > 0.999:
        up = np.array([0.0, 1.0, 0.0])
    right = np.cross(forward, up)
    right /= np.linalg.norm(right)
    down = np.cross(forward, right)
    R = np.stack([right, down, forward])
    return R, -R @ eye


def intrinsics(width: int, height: int, fov_deg: float) -> np.ndarray:
    f = 0.5 * width / np.tan(np.radians(fov_deg) / 2.0)
    return np.array([[f, 0.0, (width - 1) / 2.0], [0.0, f, (height - 1) / 2.0], [0.0, 0.0, 1.0]])


def _camera_rig(spec: SyntheticSpec) -> List[Tuple[np.ndarray, np.ndarray]]:
    poses = []
    for i in range(spec.num_views):
        theta = 2.0 * np.pi * i / spec.num_views
        ring = np.array([np.cos(theta), np.sin(theta), 0.0])
        if spec.scene == "plane":
            eye = spec.camera_radius * ring + np.array([0.0, 0.0, 1.0 + spec.camera_height])
            target = eye - np.array([0.0, 0.0, 1.0])
        elif spec.scene == "sphere":
            eye = 4.0 * spec.sphere_radius * ring + np.array([0.0, 0.0, spec.camera_height])
            target = np.zeros(3)
        else:
            eye = spec.camera_radius * ring + np.array([0.0, 0.0, spec.camera_height])
            target = np.array([0.0, 0.0, spec.camera_height - spec.look_down])
        poses.append(look_at(eye, target))
    return poses


# ---------------------------------------------------------------------------
# shapes
# ---------------------------------------------------------------------------

def _room(spec: SyntheticSpec) -> Primitive:
    return Room(center=(0.0, 0.0, 0.0), half_extents=tuple(spec.room_half_extents), label=1)


def _pillar(spec: SyntheticSpec) -> Box:
    hz = spec.room_half_extents[2]
    w = spec.pillar_half_width
    return Box(
        center=(spec.pillar_center[0], spec.pillar_center[1], 0.0),
        half_extents=(w, w, hz),
        cap_z=False,
        label=PILLAR_LABEL,
    )


SHAPE_BUILDERS = {
    "plane": lambda s: Plane(normal=(0.0, 0.0, 1.0), offset=0.0, extent=s.plane_extent, label=1),
    "sphere": lambda s: Sphere(center=(0.0, 0.0, 0.0), radius=s.sphere_radius, label=1),
    "box_room": _room,
    "box_room_pillar": lambda s: Union(members=[_room(s), _pillar(s)]),
}


def scene_regions(spec: SyntheticSpec) -> Dict[str, List[List[float]]]:
    """Axis-aligned evaluation regions in scene units: the pillar (padded) and the walls."""
    regions: Dict[str, List[List[float]]] = {}
    if spec.scene.startswith("box_room"):
        h = np.asarray(spec.room_half_extents)
        regions["room"] = [(-h - 0.05).tolist(), (h + 0.05).tolist()]
    if spec.scene == "box_room_pillar":
        pillar = _pillar(spec)
        pad = np.array([0.15, 0.15, 0.0])
        c, ph = np.asarray(pillar.center), np.asarray(pillar.half_extents)
        regions["pillar"] = [(c - ph - pad).tolist(), (c + ph + pad).tolist()]
    return regions


# ---------------------------------------------------------------------------
# texture and shading
# ---------------------------------------------------------------------------

def _smoothstep(t: np.ndarray) -> np.ndarray:
    return t * t * (3.0 - 2.0 * t)


def _lattice(table: np.ndarray, ijk: np.ndarray) -> np.ndarray:
    ijk = ijk.astype(np.int64)
    h = (ijk[..., 0] * 73856093) ^ (ijk[..., 1] * 19349663) ^ (ijk[..., 2] * 83492791)
    return table[np.mod(h, table.shape[0])]


def value_noise(points: np.ndarray, table: np.ndarray, cell: float, octaves: int = 4) -> np.ndarray:
    """Multi-octave 3D value noise in [0, 1], fixed to world coordinates."""
    total = np.zeros(points.shape[0])
    norm = 0.0
    for k in range(octaves):
        amp = 0.5 ** k
        p = points / (cell / 2 ** k)
        base = np.floor(p)
        frac = _smoothstep(p - base)
        acc = np.zeros(points.shape[0])
        for dx in (0, 1):
            for dy in (0, 1):
                for dz in (0, 1):
                    w = (
                        (frac[:, 0] if dx else 1.0 - frac[:, 0])
                        * (frac[:, 1] if dy else 1.0 - frac[:, 1])
                        * (frac[:, 2] if dz else 1.0 - frac[:, 2])
                    )
                    acc += w * _lattice(table, base + np.array([dx, dy, dz]))
        total += amp * acc
        norm += amp
    return total / norm


def shade(
    points: np.ndarray,
    normals: np.ndarray,
    view_dirs: np.ndarray,
    labels: np.ndarray,
    spec: SyntheticSpec,
    table: np.ndarray,
) -> np.ndarray:
    tints = {1: np.array([0.85, 0.75, 0.6]), PILLAR_LABEL: np.array([0.45, 0.6, 0.85])}
    if spec.texture == "flat":
        pattern = np.full(points.shape[0], 0.7)
    else:
        pattern = 0.25 + 0.75 * value_noise(points, table, spec.noise_cell, spec.noise_octaves)
        if spec.texture == "noise_flat_ceiling":
            pattern = np.where(normals[:, 2] < -0.9, 0.7, pattern)
    tint = np.stack([tints.get(int(l), tints[1]) for l in labels]) if len(labels) else np.zeros((0, 3))
    albedo = tint * pattern[:, None]
    lambert = 0.6 + 0.4 * np.abs(normals @ _LIGHT_DIR)
    color = albedo * lambert[:, None]
    if spec.specular > 0.0:
        reflect = 2.0 * (normals @ _LIGHT_DIR)[:, None] * normals - _LIGHT_DIR[None, :]
        spec_term = np.clip(np.sum(reflect * -view_dirs, axis=-1), 0.0, 1.0) ** 32
        color = color + spec.specular * spec_term[:, None]
    return np.clip(color, 0.0, 1.0)


# ---------------------------------------------------------------------------
# ray casting
# ---------------------------------------------------------------------------

def sdf_normals(shape: Primitive, points: np.ndarray) -> np.ndarray:
    """Unit SDF gradients at `points` via autograd."""
    x = torch.from_numpy(np.asarray(points, dtype=np.float64)).requires_grad_(True)
    (grad,) = torch.autograd.grad(shape.sdf(x).sum(), x)
    g = grad.numpy()
    return g / np.maximum(np.linalg.norm(g, axis=-1, keepdims=True), 1e-12)


def cast_view(shape: Primitive, K: np.ndarray, R: np.ndarray, t: np.ndarray, height: int, width: int) -> Dict[str, np.ndarray]:
    """Ray-cast every pixel centre. Returns ray depth, world hit points, labels and world ray directions."""
    vv, uu = np.meshgrid(np.arange(height, dtype=np.float64), np.arange(width, dtype=np.float64), indexing="ij")
    pix = np.stack([uu, vv, np.ones_like(uu)], axis=-1).reshape(-1, 3)
    cam = pix @ np.linalg.inv(K).T
    dirs = cam @ R
    dirs /= np.linalg.norm(dirs, axis=-1, keepdims=True)
    origin = -R.T @ t
    origins = np.broadcast_to(origin, dirs.shape).copy()
    depth, labels = intersect_labeled(shape, origins, dirs)
    hit = np.isfinite(depth)
    return {"depth": depth, "hit": hit, "labels": labels, "dirs": dirs, "origin": origin}


def _corrupt(normals_cam: np.ndarray, region: np.ndarray, spec: SyntheticSpec, rng: np.random.Generator) -> np.ndarray:
    smooth = np.stack([ndimage.gaussian_filter(normals_cam[..., c], spec.corruption_sigma_px) for c in range(3)], -1)
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    rot = Rotation.from_rotvec(np.radians(spec.corruption_angle_deg) * axis)
    bent = rot.apply(smooth.reshape(-1, 3)).reshape(smooth.shape)
    bent /= np.maximum(np.linalg.norm(bent, axis=-1, keepdims=True), 1e-12)
    # keep the corrupted prior facing the camera
    bent = np.where(bent[..., 2:3] > 0.0, -bent, bent)
    return np.where(region[..., None], bent, normals_cam)


def make_synthetic_scene(spec: SyntheticSpec | Dict) -> Scene:
    if isinstance(spec, dict):
        spec = SyntheticSpec(**spec)
    if spec.scene not in SHAPE_BUILDERS:
        raise ValidationError(f"unknown primitive set: {spec.scene!r}")
    if spec.texture not in TEXTURES:
        raise ValidationError(f"unknown texture: {spec.texture!r}")
    shape = SHAPE_BUILDERS[spec.scene](spec)
    rng = numpy_rng(spec.seed, "synthetic")
    table = rng.random(_NOISE_TABLE_SIZE)
    K = intrinsics(spec.width, spec.height, spec.fov_deg)
    h, w = spec.height, spec.width

    views = []
    for i, (R, t) in enumerate(_camera_rig(spec)):
        cast = cast_view(shape, K, R, t, h, w)
        hit = cast["hit"]
        depth = np.where(hit, cast["depth"], 0.0)
        points = cast["origin"][None, :] + depth[:, None] * cast["dirs"]

        normals_world = np.zeros_like(points)
        if hit.any():
            # step back off the surface so the gradient is taken on the free-space side
            stepped = points[hit] - 1e-6 * cast["dirs"][hit]
            normals_world[hit] = sdf_normals(shape, stepped)
        color = np.zeros_like(points)
        color[hit] = shade(points[hit], normals_world[hit], cast["dirs"][hit], cast["labels"][hit], spec, table)

        normals_cam = (normals_world @ R.T).reshape(h, w, 3)
        labels = cast["labels"].reshape(h, w).astype(np.uint8)
        valid = hit.reshape(h, w)

        priors = normals_cam.copy()
        corrupt = np.zeros((h, w), dtype=bool)
        if spec.corrupt_priors and spec.scene == "box_room_pillar":
            corrupt = ndimage.binary_dilation(labels == PILLAR_LABEL, iterations=spec.corruption_dilate_px) if spec.corruption_dilate_px else labels == PILLAR_LABEL
            corrupt &= valid
            priors = _corrupt(normals_cam, corrupt, spec, rng)
        priors = np.where(valid[..., None], priors, 0.0).astype(np.float32)

        views.append(
            CameraView(
                K=K,
                R=R,
                t=t,
                image=color.reshape(h, w, 3),
                prior_normals=priors,
                valid_mask=valid,
                name=f"{i:06d}",
                gt_normals=normals_cam.astype(np.float32),
                gt_depth=depth.reshape(h, w).astype(np.float32),
                labels=labels,
                corrupt_mask=corrupt,
            )
        )
    logger.info("synthetic %s: %d views %dx%d", spec.scene, len(views), w, h)

    roi = None
    if spec.scene.startswith("box_room"):
        he = np.asarray(spec.room_half_extents)
        roi = np.stack([-he, he])
    gt_mesh = shape.to_mesh()
    center, radius = bounding_sphere(roi_points(views, gt_mesh, roi))
    return Scene(
        views=views,
        bound_center=center,
        bound_radius=radius / NORMALIZATION_MARGIN,
        gt_mesh=gt_mesh,
        analytic_sdf=shape,
        roi=roi,
        name=spec.scene,
    )


def load_spec(path: Path) -> SyntheticSpec:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise ValidationError(f"cannot read synthetic spec {path}: {e}") from e
    try:
        return SyntheticSpec(**data)
    except ValueError as e:
        raise ValidationError(f"invalid synthetic spec {path}: {e}") from e


def write_scene(spec: SyntheticSpec, out_dir: Path, scene: Optional[Scene] = None) -> Path:
    scene = scene or make_synthetic_scene(spec)
    meta = {"spec": spec.model_dump(), "regions": scene_regions(spec)}
    return save_scene(scene, out_dir, extra_meta=meta)


def main() -> None:
    parser = argparse.ArgumentParser(description="Generate a synthetic scene directory")
    parser.add_argument("spec", type=Path, help="JSON scene spec")
    parser.add_argument("out_dir", type=Path)
    args = parser.parse_args()

    logging.basicConfig(level=logging.INFO)
    spec = load_spec(args.spec)
    path = write_scene(spec, args.out_dir)
    print(json.dumps({"status": "ok", "scene_dir": str(path)}))


if __name__ == "__main__":
    main()
