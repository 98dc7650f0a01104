"""Load, validate and normalize posed multi-view scenes; generate rays; pick neighbor views.

Layout of a scene directory (frames matched by zero-padded stem, e.g. `000012`):

    image/<stem>.png          RGB, 8 or 16 bit
    pose/<stem>.txt           4x4 camera-to-world, row-major text
    intrinsics/<stem>.txt     3x3 (or 4x4) K, or a single shared `intrinsics.txt`
    normal/<stem>.rfl|.npy    HxWx3 float normal prior, camera frame
    mask/<stem>.png           optional validity mask (white = valid)
    normal_gt/, depth/        optional GT normal / ray-distance depth maps (.rfl)
    label/<stem>.png          optional per-pixel part labels (synthetic scenes)
    corrupt/<stem>.png        optional corrupted-prior region (synthetic scenes)
    gt_mesh.ply, bounds.txt, synthetic.json   optional scene-level files

Camera frame: x right, y down, z forward. Prior normals face the camera (z < 0).
`.rfl` is a raw float map: magic b"RFLT", then little-endian uint32 H, W, C, dtype code,
then the row-major payload.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

# Ensure project root is on sys.path so that `utils.*` works when run as a script.
ROOT = Path(__file__).resolve().parent.parent
if str(ROOT) not in sys.path:
    sys.path.append(str(ROOT))

import numpy as np
import torch
import trimesh
from PIL import Image

from utils.errors import DegenerateSceneError, SceneLoadError, ValidationError
from utils.primitives import Primitive, Transformed, primitive_from_dict

logger = logging.getLogger(__name__)

FLOAT_MAP_MAGIC = b"RFLT"
_DTYPE_CODES = {0: np.float32, 1: np.float16, 2: np.float64}
_CODES_BY_DTYPE = {np.dtype(v): k for k, v in _DTYPE_CODES.items()}

REQUIRED_STREAMS = ("image", "pose", "normal")
NORMALIZATION_MARGIN = 0.9


# ---------------------------------------------------------------------------
# raster IO
# ---------------------------------------------------------------------------

def write_float_map(path: Path, array: np.ndarray) -> None:
    array = np.asarray(array)
    if array.ndim == 2:
        array = array[..., None]
    if array.dtype not in _CODES_BY_DTYPE:
        array = array.astype(np.float32)
    h, w, c = array.shape
    header = np.array([h, w, c, _CODES_BY_DTYPE[array.dtype]], dtype="<u4").tobytes()
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("wb") as f:
        f.write(FLOAT_MAP_MAGIC)
        f.write(header)
        f.write(np.ascontiguousarray(array).astype(array.dtype.newbyteorder("<")).tobytes())


def read_float_map(path: Path) -> np.ndarray:
    if path.suffix == ".npy":
        return np.load(path).astype(np.float32)
    raw = path.read_bytes()
    if raw[:4] != FLOAT_MAP_MAGIC:
        raise SceneLoadError(f"{path}: bad float map magic")
    h, w, c, code = np.frombuffer(raw[4:20], dtype="<u4")
    if int(code) not in _DTYPE_CODES:
        raise SceneLoadError(f"{path}: unknown dtype code {code}")
    dtype = np.dtype(_DTYPE_CODES[int(code)]).newbyteorder("<")
    expected = int(h) * int(w) * int(c) * dtype.itemsize
    payload = raw[20:]
    if len(payload) != expected:
        raise SceneLoadError(f"{path}: payload has {len(payload)} bytes, expected {expected}")
    data = np.frombuffer(payload, dtype=dtype).reshape(int(h), int(w), int(c))
    out = data.astype(np.float32)
    return out[..., 0] if int(c) == 1 else out


def read_image(path: Path) -> np.ndarray:
    with Image.open(path) as img:
        if img.mode in ("I;16", "I;16B", "I"):
            arr = np.asarray(img, dtype=np.float32) / 65535.0
            return np.repeat(arr[..., None], 3, axis=-1)
        return np.asarray(img.convert("RGB"), dtype=np.float32) / 255.0


def write_image(path: Path, image: np.ndarray) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    arr = np.clip(np.asarray(image) * 255.0 + 0.5, 0, 255).astype(np.uint8)
    Image.fromarray(arr).save(path)


def read_mask(path: Path) -> np.ndarray:
    with Image.open(path) as img:
        return np.asarray(img.convert("L")) > 127


def write_mask(path: Path, mask: np.ndarray) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray((np.asarray(mask, dtype=bool) * 255).astype(np.uint8)).save(path)


# ---------------------------------------------------------------------------
# types
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class CameraView:
    """One posed image. `R`, `t` map world to camera: x_cam = R x + t."""

    K: np.ndarray
    R: np.ndarray
    t: np.ndarray
    image: np.ndarray
    prior_normals: np.ndarray
    valid_mask: np.ndarray
    name: str = ""
    gt_normals: Optional[np.ndarray] = None
    gt_depth: Optional[np.ndarray] = None
    labels: Optional[np.ndarray] = None
    corrupt_mask: Optional[np.ndarray] = None

    def __post_init__(self):
        K = np.asarray(self.K, dtype=np.float64)
        R = np.asarray(self.R, dtype=np.float64)
        t = np.asarray(self.t, dtype=np.float64).reshape(3)
        object.__setattr__(self, "K", K)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "image", np.asarray(self.image, dtype=np.float32))
        object.__setattr__(self, "prior_normals", np.asarray(self.prior_normals, dtype=np.float32))
        object.__setattr__(self, "valid_mask", np.asarray(self.valid_mask, dtype=bool))

        if K.shape != (3, 3) or R.shape != (3, 3):
            raise ValidationError(f"view {self.name}: K and R must be 3x3")
        if np.abs(R @ R.T - np.eye(3)).max() > 1e-6 or abs(np.linalg.det(R) - 1.0) > 1e-6:
            raise ValidationError(f"view {self.name}: rotation is not orthonormal with det +1")
        if self.image.ndim != 3 or self.image.shape[-1] != 3:
            raise ValidationError(f"view {self.name}: image must be HxWx3")
        h, w = self.image.shape[:2]
        if K[0, 0] <= 0 or K[1, 1] <= 0:
            raise ValidationError(f"view {self.name}: focal lengths must be positive")
        if not (0.0 <= K[0, 2] <= w - 1 and 0.0 <= K[1, 2] <= h - 1):
            raise ValidationError(f"view {self.name}: principal point outside the image")
        if self.prior_normals.shape != (h, w, 3):
            raise ValidationError(
                f"view {self.name}: normal map shape {self.prior_normals.shape} != image {(h, w, 3)}"
            )
        if self.valid_mask.shape != (h, w):
            raise ValidationError(f"view {self.name}: valid mask shape {self.valid_mask.shape} != {(h, w)}")
        norms = np.linalg.norm(self.prior_normals[self.valid_mask], axis=-1)
        if norms.size and np.abs(norms - 1.0).max() > 1e-4:
            raise ValidationError(f"view {self.name}: prior normals on valid pixels are not unit length")

    @property
    def height(self) -> int:
        return int(self.image.shape[0])

    @property
    def width(self) -> int:
        return int(self.image.shape[1])

    @property
    def center(self) -> np.ndarray:
        return -self.R.T @ self.t

    @property
    def optical_axis(self) -> np.ndarray:
        return self.R[2].copy()

    @property
    def K_inv(self) -> np.ndarray:
        return np.linalg.inv(self.K)

    def project(self, points: np.ndarray) -> np.ndarray:
        """World points (...,3) -> pixel coordinates (...,2)."""
        cam = np.asarray(points) @ self.R.T + self.t
        pix = cam @ self.K.T
        return pix[..., :2] / pix[..., 2:3]


@dataclass(frozen=True)
class SimilarityTransform:
    """x_new = scale * (x_old - center)."""

    scale: float = 1.0
    center: Tuple[float, float, float] = (0.0, 0.0, 0.0)

    def apply(self, points: np.ndarray) -> np.ndarray:
        return self.scale * (np.asarray(points) - np.asarray(self.center))

    def apply_inverse(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points) / self.scale + np.asarray(self.center)

    def inverse(self) -> "SimilarityTransform":
        return SimilarityTransform(1.0 / self.scale, tuple((-self.scale * np.asarray(self.center)).tolist()))

    def then(self, other: "SimilarityTransform") -> "SimilarityTransform":
        """Apply self first, then `other`."""
        c = np.asarray(self.center) + np.asarray(other.center) / self.scale
        return SimilarityTransform(self.scale * other.scale, tuple(c.tolist()))

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] *= self.scale
        m[:3, 3] = -self.scale * np.asarray(self.center)
        return m

    def to_dict(self) -> Dict:
        return {"scale": float(self.scale), "center": [float(v) for v in self.center]}

    @classmethod
    def from_dict(cls, data: Dict) -> "SimilarityTransform":
        return cls(float(data["scale"]), tuple(float(v) for v in data["center"]))


@dataclass
class Scene:
    views: List[CameraView]
    bound_center: np.ndarray = field(default_factory=lambda: np.zeros(3))
    bound_radius: float = 1.0
    gt_mesh: Optional[trimesh.Trimesh] = None
    analytic_sdf: Optional[Primitive] = None
    roi: Optional[np.ndarray] = None
    to_normalized: SimilarityTransform = field(default_factory=SimilarityTransform)
    name: str = "scene"

    def __len__(self) -> int:
        return len(self.views)


@dataclass(frozen=True)
class Ray:
    origin: np.ndarray
    direction: np.ndarray
    near: float
    far: float

    def __post_init__(self):
        if abs(np.linalg.norm(self.direction) - 1.0) > 1e-6:
            raise ValidationError("ray direction must be unit length")
        if not (0.0 <= self.near < self.far):
            raise ValidationError(f"ray bounds must satisfy 0 <= near < far, got {self.near}, {self.far}")

    def at(self, depth: float) -> np.ndarray:
        return self.origin + depth * self.direction


# ---------------------------------------------------------------------------
# loading / saving
# ---------------------------------------------------------------------------

def _stems(directory: Path) -> Dict[str, Path]:
    if not directory.is_dir():
        return {}
    return {p.stem: p for p in sorted(directory.iterdir()) if p.is_file()}


def _load_matrix(path: Path, stem: str) -> np.ndarray:
    try:
        mat = np.loadtxt(path, dtype=np.float64)
    except Exception as e:
        raise SceneLoadError(f"frame {stem}: cannot parse {path.name}: {e}") from e
    return mat


def _intrinsics_3x3(mat: np.ndarray, stem: str) -> np.ndarray:
    if mat.shape == (4, 4):
        return mat[:3, :3]
    if mat.shape != (3, 3):
        raise SceneLoadError(f"frame {stem}: intrinsics must be 3x3 or 4x4, got {mat.shape}")
    return mat


def pose_to_extrinsics(c2w: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Camera-to-world 4x4 -> world-to-camera (R, t)."""
    R = c2w[:3, :3].T
    t = -R @ c2w[:3, 3]
    return R, t


def extrinsics_to_pose(R: np.ndarray, t: np.ndarray) -> np.ndarray:
    c2w = np.eye(4)
    c2w[:3, :3] = R.T
    c2w[:3, 3] = -R.T @ t
    return c2w


def _load_frame(root: Path, stem: str, files: Dict[str, Dict[str, Path]], shared_K: Optional[np.ndarray]) -> CameraView:
    try:
        image = read_image(files["image"][stem])
        normals = read_float_map(files["normal"][stem])
    except SceneLoadError:
        raise
    except Exception as e:
        raise SceneLoadError(f"frame {stem}: corrupt raster: {e}") from e

    pose = _load_matrix(files["pose"][stem], stem)
    if pose.shape != (4, 4) or not np.all(np.isfinite(pose)):
        raise SceneLoadError(f"frame {stem}: pose must be a finite 4x4 matrix")
    R, t = pose_to_extrinsics(pose)

    if stem in files["intrinsics"]:
        K = _intrinsics_3x3(_load_matrix(files["intrinsics"][stem], stem), stem)
    elif shared_K is not None:
        K = shared_K
    else:
        raise SceneLoadError(f"frame {stem}: missing intrinsics")

    valid = np.ones(image.shape[:2], dtype=bool)
    if stem in files["mask"]:
        valid = read_mask(files["mask"][stem])

    extras = {}
    if stem in files["normal_gt"]:
        extras["gt_normals"] = read_float_map(files["normal_gt"][stem])
    if stem in files["depth"]:
        extras["gt_depth"] = read_float_map(files["depth"][stem])
    if stem in files["label"]:
        with Image.open(files["label"][stem]) as img:
            extras["labels"] = np.asarray(img, dtype=np.uint8)
    if stem in files["corrupt"]:
        extras["corrupt_mask"] = read_mask(files["corrupt"][stem])

    if normals.ndim == 3 and normals.shape[:2] == image.shape[:2]:
        # pixels without a usable prior are excluded rather than failing the frame
        norm = np.linalg.norm(normals, axis=-1)
        valid = valid & np.isfinite(norm) & (norm > 0.5)
    try:
        return CameraView(K=K, R=R, t=t, image=image, prior_normals=normals, valid_mask=valid, name=stem, **extras)
    except ValidationError as e:
        raise ValidationError(f"frame {stem}: {e}") from e


def load_scene(directory: Path | str) -> Scene:
    root = Path(directory)
    if not root.is_dir():
        raise SceneLoadError(f"scene directory not found: {root}")

    streams = ("image", "pose", "intrinsics", "normal", "mask", "normal_gt", "depth", "label", "corrupt")
    files = {s: _stems(root / s) for s in streams}
    shared_K = None
    if (root / "intrinsics.txt").exists():
        shared_K = _intrinsics_3x3(_load_matrix(root / "intrinsics.txt", "shared"), "shared")

    stems = sorted(set().union(*(files[s].keys() for s in REQUIRED_STREAMS)))
    if not stems:
        raise SceneLoadError(f"{root}: no frames found")
    for stem in stems:
        for s in REQUIRED_STREAMS:
            if stem not in files[s]:
                raise SceneLoadError(f"frame {stem}: missing {s} file")

    views = [_load_frame(root, stem, files, shared_K) for stem in stems]
    sizes = {(v.height, v.width) for v in views}
    if len(sizes) != 1:
        raise ValidationError(f"all frames must share one resolution, found {sorted(sizes)}")

    gt_mesh = None
    if (root / "gt_mesh.ply").exists():
        gt_mesh = trimesh.load(root / "gt_mesh.ply", force="mesh", process=False)
    roi = None
    if (root / "bounds.txt").exists():
        roi = _load_matrix(root / "bounds.txt", "bounds").reshape(2, 3)
    analytic = None
    to_normalized = SimilarityTransform()
    meta_path = root / "synthetic.json"
    if meta_path.exists():
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
        analytic = primitive_from_dict(meta["shape"])
        if "to_normalized" in meta:
            to_normalized = SimilarityTransform.from_dict(meta["to_normalized"])

    center, radius = bounding_sphere(roi_points(views, gt_mesh, roi))
    logger.info("loaded scene %s with %d views (%dx%d)", root.name, len(views), views[0].width, views[0].height)
    return Scene(
        views=views,
        bound_center=center,
        bound_radius=radius / NORMALIZATION_MARGIN,
        gt_mesh=gt_mesh,
        analytic_sdf=analytic,
        roi=roi,
        to_normalized=to_normalized,
        name=root.name,
    )


def save_scene(scene: Scene, directory: Path | str, extra_meta: Optional[Dict] = None) -> Path:
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    for i, view in enumerate(scene.views):
        stem = view.name or f"{i:06d}"
        write_image(root / "image" / f"{stem}.png", view.image)
        (root / "pose").mkdir(exist_ok=True)
        np.savetxt(root / "pose" / f"{stem}.txt", extrinsics_to_pose(view.R, view.t), fmt="%.17g")
        (root / "intrinsics").mkdir(exist_ok=True)
        np.savetxt(root / "intrinsics" / f"{stem}.txt", view.K, fmt="%.17g")
        write_float_map(root / "normal" / f"{stem}.rfl", view.prior_normals)
        write_mask(root / "mask" / f"{stem}.png", view.valid_mask)
        if view.gt_normals is not None:
            write_float_map(root / "normal_gt" / f"{stem}.rfl", view.gt_normals)
        if view.gt_depth is not None:
            write_float_map(root / "depth" / f"{stem}.rfl", view.gt_depth)
        if view.labels is not None:
            (root / "label").mkdir(exist_ok=True)
            Image.fromarray(view.labels.astype(np.uint8)).save(root / "label" / f"{stem}.png")
        if view.corrupt_mask is not None:
            write_mask(root / "corrupt" / f"{stem}.png", view.corrupt_mask)
    if scene.gt_mesh is not None:
        scene.gt_mesh.export(root / "gt_mesh.ply")
    if scene.roi is not None:
        np.savetxt(root / "bounds.txt", np.asarray(scene.roi).reshape(2, 3), fmt="%.17g")
    if scene.analytic_sdf is not None:
        meta = {"shape": scene.analytic_sdf.to_dict(), "to_normalized": scene.to_normalized.to_dict()}
        meta.update(extra_meta or {})
        (root / "synthetic.json").write_text(json.dumps(meta, indent=2), encoding="utf-8")
    return root


# ---------------------------------------------------------------------------
# normalization
# ---------------------------------------------------------------------------

def roi_points(views: Sequence[CameraView], gt_mesh: Optional[trimesh.Trimesh], roi: Optional[np.ndarray]) -> np.ndarray:
    points = [np.stack([v.center for v in views])]
    if roi is not None:
        lo, hi = np.asarray(roi).reshape(2, 3)
        corners = np.array([[x, y, z] for x in (lo[0], hi[0]) for y in (lo[1], hi[1]) for z in (lo[2], hi[2])])
        points.append(corners)
    elif gt_mesh is not None and len(gt_mesh.vertices):
        points.append(np.asarray(gt_mesh.bounds))
    return np.concatenate(points, axis=0)


def bounding_sphere(points: np.ndarray) -> Tuple[np.ndarray, float]:
    center = 0.5 * (points.min(axis=0) + points.max(axis=0))
    radius = float(np.linalg.norm(points - center, axis=-1).max())
    return center, radius


def transform_view(view: CameraView, transform: SimilarityTransform) -> CameraView:
    center = transform.apply(view.center)
    t = -view.R @ center
    gt_depth = None if view.gt_depth is None else view.gt_depth * transform.scale
    return replace(view, t=t, gt_depth=gt_depth)


def transform_scene(scene: Scene, transform: SimilarityTransform) -> Scene:
    gt_mesh = None
    if scene.gt_mesh is not None:
        gt_mesh = scene.gt_mesh.copy()
        gt_mesh.apply_transform(transform.matrix())
    roi = None if scene.roi is None else transform.apply(np.asarray(scene.roi).reshape(2, 3))
    analytic = None
    if scene.analytic_sdf is not None:
        analytic = Transformed(base=scene.analytic_sdf, scale=transform.scale, center=tuple(transform.center))
    return Scene(
        views=[transform_view(v, transform) for v in scene.views],
        bound_center=transform.apply(scene.bound_center),
        bound_radius=scene.bound_radius * transform.scale,
        gt_mesh=gt_mesh,
        analytic_sdf=analytic,
        roi=roi,
        to_normalized=scene.to_normalized.then(transform),
        name=scene.name,
    )


def normalize_scene(scene: Scene, margin: float = NORMALIZATION_MARGIN) -> Tuple[Scene, SimilarityTransform]:
    """Map camera centers and the region of interest into the unit sphere.

    The region of interest is `scene.roi` when present, else the GT mesh bounds, else the
    cameras alone. Its bounding sphere is scaled to radius `margin`.
    """
    if len(scene.views) < 2:
        raise ValidationError("normalization needs at least 2 views")
    centers = np.stack([v.center for v in scene.views])
    if np.linalg.norm(centers - centers.mean(axis=0), axis=-1).max() < 1e-9:
        raise DegenerateSceneError("all camera centers coincide")
    center, radius = bounding_sphere(roi_points(scene.views, scene.gt_mesh, scene.roi))
    transform = SimilarityTransform(margin / radius, tuple(center.tolist()))
    out = transform_scene(scene, transform)
    out.bound_center = np.zeros(3)
    out.bound_radius = 1.0
    return out, transform


# ---------------------------------------------------------------------------
# rays
# ---------------------------------------------------------------------------

def sphere_near_far(origins: torch.Tensor, dirs: torch.Tensor, radius: float = 1.0) -> Tuple[torch.Tensor, torch.Tensor]:
    """Entry/exit distances of unit-direction rays against a sphere at the origin; near >= 0."""
    b = (origins * dirs).sum(dim=-1)
    c = (origins * origins).sum(dim=-1) - radius ** 2
    disc = b * b - c
    root = torch.sqrt(torch.clamp(disc, min=0.0))
    near = torch.clamp(-b - root, min=0.0)
    far = -b + root
    return near, far


def pixel_dirs(K_inv: torch.Tensor, R: torch.Tensor, uv: torch.Tensor) -> torch.Tensor:
    """Batched unit world directions for pixels `uv` (...,2) of cameras (...,3,3)."""
    ones = torch.ones_like(uv[..., :1])
    homog = torch.cat([uv, ones], dim=-1)
    cam = (K_inv @ homog.unsqueeze(-1)).squeeze(-1)
    world = (R.transpose(-1, -2) @ cam.unsqueeze(-1)).squeeze(-1)
    return world / torch.linalg.norm(world, dim=-1, keepdim=True)


def pixel_ray(view: CameraView, q: Sequence[float], radius: float = 1.0) -> Ray:
    u, v = float(q[0]), float(q[1])
    if not (0.0 <= u <= view.width - 1 and 0.0 <= v <= view.height - 1):
        raise ValidationError(f"pixel {(u, v)} outside image {view.width}x{view.height}")
    cam = view.K_inv @ np.array([u, v, 1.0])
    direction = view.R.T @ cam
    direction = direction / np.linalg.norm(direction)
    origin = view.center
    b = float(origin @ direction)
    c = float(origin @ origin) - radius ** 2
    disc = b * b - c
    if disc <= 0.0 or -b + np.sqrt(disc) <= 0.0:
        raise ValidationError("ray misses the bounding sphere")
    root = np.sqrt(disc)
    return Ray(origin=origin, direction=direction, near=max(-b - root, 0.0), far=-b + root)


def ray_depth_to_z(depth: np.ndarray | torch.Tensor, cam_dirs_z: np.ndarray | torch.Tensor):
    """Distance along the ray -> camera z-depth, given the z component of unit camera-frame directions."""
    return depth * cam_dirs_z


# ---------------------------------------------------------------------------
# neighbors
# ---------------------------------------------------------------------------

def select_neighbor_views(scene: Scene, reference_index: int, count: int, max_angle_deg: float = 45.0) -> List[int]:
    """Rank other views by camera-center distance, ties broken by optical-axis angle.

    Views within `max_angle_deg` come first; if fewer than `count` qualify, the nearest
    remaining views fill the list.
    """
    if count < 1:
        raise ValidationError("neighbor count must be >= 1")
    if len(scene.views) <= count:
        raise ValidationError(f"need more than {count} views, scene has {len(scene.views)}")
    ref = scene.views[reference_index]
    scored = []
    for j, view in enumerate(scene.views):
        if j == reference_index:
            continue
        dist = float(np.linalg.norm(view.center - ref.center))
        cos = float(np.clip(view.optical_axis @ ref.optical_axis, -1.0, 1.0))
        angle = float(np.degrees(np.arccos(cos)))
        scored.append((angle >= max_angle_deg, round(dist, 12), angle, j))
    scored.sort()
    chosen = [j for _, _, _, j in scored[:count]]
    if any(flag for flag, *_ in scored[:count]):
        logger.warning("view %d: fewer than %d neighbors within %.0f degrees", reference_index, count, max_angle_deg)
    return chosen


def main() -> None:
    parser = argparse.ArgumentParser(description="Inspect a scene directory")
    parser.add_argument("scene_dir", type=Path)
    parser.add_argument("--neighbors", type=int, default=2)
    args = parser.parse_args()

    logging.basicConfig(level=logging.INFO)
    scene, transform = normalize_scene(load_scene(args.scene_dir))
    report = {
        "views": len(scene),
        "resolution": [scene.views[0].width, scene.views[0].height],
        "to_normalized": transform.to_dict(),
        "neighbors": {v.name: select_neighbor_views(scene, i, args.neighbors) for i, v in enumerate(scene.views)},
    }
    print(json.dumps(report, indent=2))


if __name__ == "__main__":
    main()
