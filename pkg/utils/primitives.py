"""Closed-form signed distance primitives.

Sign convention: negative inside solid matter, positive in free space. A room is
the complement of a box interior, so its free space (where cameras live) is positive.

Every primitive offers three views of the same shape:
  - `sdf(x)`        torch, differentiable, used by AnalyticField and the oracles
  - `intersect(o,d)` numpy, first ray hit distance, used by the synthetic ray caster
  - `to_mesh()`     trimesh surface, used as ground truth for mesh metrics
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np
import torch
import trimesh

from utils.errors import ValidationError

_EPS = 1e-9


def _as_tensor(values: Sequence[float], like: torch.Tensor) -> torch.Tensor:
    return torch.as_tensor(np.asarray(values, dtype=np.float64), dtype=like.dtype, device=like.device)


def _safe_dirs(d: np.ndarray) -> np.ndarray:
    # keep the sign of exact zeros so slab tests see +/-inf instead of nan
    tiny = np.where(d >= 0.0, 1e-300, -1e-300)
    return np.where(np.abs(d) < 1e-300, tiny, d)


def _slabs(o: np.ndarray, d: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    d = _safe_dirs(d)
    t1 = (lo[None, :] - o) / d
    t2 = (hi[None, :] - o) / d
    t_near = np.minimum(t1, t2).max(axis=-1)
    t_far = np.maximum(t1, t2).min(axis=-1)
    return t_near, t_far


@dataclass
class Primitive:
    label: int = 1

    kind = "primitive"

    def sdf(self, x: torch.Tensor) -> torch.Tensor:
        raise NotImplementedError

    def intersect(self, origins: np.ndarray, dirs: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def to_mesh(self) -> trimesh.Trimesh:
        raise NotImplementedError

    def to_dict(self) -> Dict:
        raise NotImplementedError

    # Union support: a leaf primitive is its own single part.
    def parts(self) -> List["Primitive"]:
        return [self]

    def sdf_np(self, x: np.ndarray) -> np.ndarray:
        with torch.no_grad():
            return self.sdf(torch.from_numpy(np.asarray(x, dtype=np.float64))).numpy()


@dataclass
class Sphere(Primitive):
    center: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    radius: float = 1.0

    kind = "sphere"

    def sdf(self, x: torch.Tensor) -> torch.Tensor:
        return torch.linalg.norm(x - _as_tensor(self.center, x), dim=-1) - self.radius

    def intersect(self, origins: np.ndarray, dirs: np.ndarray) -> np.ndarray:
        oc = origins - np.asarray(self.center)[None, :]
        b = np.sum(oc * dirs, axis=-1)
        c = np.sum(oc * oc, axis=-1) - self.radius ** 2
        disc = b * b - c
        root = np.sqrt(np.maximum(disc, 0.0))
        t = -b - root
        hit = (disc >= 0.0) & (t > _EPS)
        return np.where(hit, t, np.inf)

    def to_mesh(self) -> trimesh.Trimesh:
        mesh = trimesh.creation.icosphere(subdivisions=5, radius=self.radius)
        mesh.apply_translation(self.center)
        return mesh

    def to_dict(self) -> Dict:
        return {"kind": self.kind, "center": list(self.center), "radius": self.radius, "label": self.label}


@dataclass
class Plane(Primitive):
    """Half-space `n.x <= offset` is solid. `extent` only bounds the GT mesh."""

    normal: Tuple[float, float, float] = (0.0, 0.0, 1.0)
    offset: float = 0.0
    extent: float = 2.0

    kind = "plane"

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=np.float64)
        norm = np.linalg.norm(n)
        if norm < 1e-12:
            raise ValidationError("plane normal must be non-zero")
        self.normal = tuple((n / norm).tolist())

    def sdf(self, x: torch.Tensor) -> torch.Tensor:
        return (x * _as_tensor(self.normal, x)).sum(dim=-1) - self.offset

    def intersect(self, origins: np.ndarray, dirs: np.ndarray) -> np.ndarray:
        n = np.asarray(self.normal)
        height = origins @ n - self.offset
        speed = dirs @ n
        with np.errstate(divide="ignore", invalid="ignore"):
            t = -height / speed
        hit = (height > 0.0) & (speed < 0.0) & (t > _EPS)
        return np.where(hit, t, np.inf)

    def to_mesh(self) -> trimesh.Trimesh:
        n = np.asarray(self.normal)
        helper = np.array([1.0, 0.0, 0.0]) if abs(n[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
        u = np.cross(n, helper)
        u /= np.linalg.norm(u)
        w = np.cross(n, u)
        c = n * self.offset
        e = self.extent
        vertices = np.stack([c - e * u - e * w, c + e * u - e * w, c + e * u + e * w, c - e * u + e * w])
        # counter-clockwise around +n
        faces = np.array([[0, 1, 2], [0, 2, 3]])
        return trimesh.Trimesh(vertices=vertices, faces=faces, process=False)

    def to_dict(self) -> Dict:
        return {
            "kind": self.kind,
            "normal": list(self.normal),
            "offset": self.offset,
            "extent": self.extent,
            "label": self.label,
        }


@dataclass
class Box(Primitive):
    """Solid axis-aligned box. `cap_z=False` drops the +/-z faces from the GT mesh
    (pillars standing between floor and ceiling)."""

    center: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    half_extents: Tuple[float, float, float] = (0.5, 0.5, 0.5)
    cap_z: bool = True

    kind = "box"

    def sdf(self, x: torch.Tensor) -> torch.Tensor:
        """Negative inside the solid; -min(half_extents) at the centre."""
        q = torch.abs(x - _as_tensor(self.center, x)) - _as_tensor(self.half_extents, x)
        outside = torch.linalg.norm(torch.clamp(q, min=0.0), dim=-1)
        inside = torch.clamp(q.max(dim=-1).values, max=0.0)
        return outside + inside

    def intersect(self, origins: np.ndarray, dirs: np.ndarray) -> np.ndarray:
        c = np.asarray(self.center)
        h = np.asarray(self.half_extents)
        t_near, t_far = _slabs(origins, dirs, c - h, c + h)
        hit = (t_far >= t_near) & (t_near > _EPS)
        return np.where(hit, t_near, np.inf)

    def to_mesh(self) -> trimesh.Trimesh:
        mesh = trimesh.creation.box(extents=2.0 * np.asarray(self.half_extents))
        mesh.apply_translation(self.center)
        if not self.cap_z:
            keep = np.abs(mesh.face_normals[:, 2]) < 0.5
            mesh = trimesh.Trimesh(vertices=mesh.vertices, faces=mesh.faces[keep], process=False)
            mesh.remove_unreferenced_vertices()
        return mesh

    def to_dict(self) -> Dict:
        return {
            "kind": self.kind,
            "center": list(self.center),
            "half_extents": list(self.half_extents),
            "cap_z": self.cap_z,
            "label": self.label,
        }


@dataclass
class Room(Primitive):
    """Free space is the interior of the box; everything outside is wall."""

    center: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    half_extents: Tuple[float, float, float] = (1.0, 1.0, 1.0)

    kind = "room"

    def sdf(self, x: torch.Tensor) -> torch.Tensor:
        """Positive in the free interior (+min(half_extents) at the centre), negative in the walls."""
        return -Box(center=self.center, half_extents=self.half_extents).sdf(x)

    def intersect(self, origins: np.ndarray, dirs: np.ndarray) -> np.ndarray:
        c = np.asarray(self.center)
        h = np.asarray(self.half_extents)
        t_near, t_far = _slabs(origins, dirs, c - h, c + h)
        inside = (t_near < 0.0) & (t_far > _EPS)
        return np.where(inside, t_far, np.inf)

    def to_mesh(self) -> trimesh.Trimesh:
        mesh = trimesh.creation.box(extents=2.0 * np.asarray(self.half_extents))
        mesh.apply_translation(self.center)
        mesh.invert()
        return mesh

    def to_dict(self) -> Dict:
        return {
            "kind": self.kind,
            "center": list(self.center),
            "half_extents": list(self.half_extents),
            "label": self.label,
        }


@dataclass
class Union(Primitive):
    members: List[Primitive] = field(default_factory=list)

    kind = "union"

    def sdf(self, x: torch.Tensor) -> torch.Tensor:
        values = torch.stack([m.sdf(x) for m in self.members], dim=-1)
        return values.min(dim=-1).values

    def intersect(self, origins: np.ndarray, dirs: np.ndarray) -> np.ndarray:
        return self.intersect_labeled(origins, dirs)[0]

    def intersect_labeled(self, origins: np.ndarray, dirs: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        hits = [intersect_labeled(m, origins, dirs) for m in self.members]
        ts = np.stack([h[0] for h in hits], axis=-1)
        member_labels = np.stack([h[1] for h in hits], axis=-1)
        first = np.argmin(ts, axis=-1)
        t = np.take_along_axis(ts, first[:, None], axis=-1)[:, 0]
        labels = np.take_along_axis(member_labels, first[:, None], axis=-1)[:, 0]
        return t, np.where(np.isfinite(t), labels, 0)

    def to_mesh(self) -> trimesh.Trimesh:
        return trimesh.util.concatenate([m.to_mesh() for m in self.members])

    def to_dict(self) -> Dict:
        return {"kind": self.kind, "members": [m.to_dict() for m in self.members], "label": self.label}

    def parts(self) -> List[Primitive]:
        return list(self.members)


@dataclass
class Transformed(Primitive):
    """A primitive seen through `x_new = scale * (x_old - center)` (scene normalization)."""

    base: Primitive = None
    scale: float = 1.0
    center: Tuple[float, float, float] = (0.0, 0.0, 0.0)

    kind = "transformed"

    def _to_base(self, x: torch.Tensor) -> torch.Tensor:
        return x / self.scale + _as_tensor(self.center, x)

    def sdf(self, x: torch.Tensor) -> torch.Tensor:
        return self.scale * self.base.sdf(self._to_base(x))

    def intersect(self, origins: np.ndarray, dirs: np.ndarray) -> np.ndarray:
        return self.intersect_labeled(origins, dirs)[0]

    def intersect_labeled(self, origins: np.ndarray, dirs: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        base_origins = origins / self.scale + np.asarray(self.center)[None, :]
        t, labels = intersect_labeled(self.base, base_origins, dirs)
        return self.scale * t, labels

    def to_mesh(self) -> trimesh.Trimesh:
        mesh = self.base.to_mesh().copy()
        mesh.apply_translation(-np.asarray(self.center))
        mesh.apply_scale(self.scale)
        return mesh

    def to_dict(self) -> Dict:
        return {
            "kind": self.kind,
            "base": self.base.to_dict(),
            "scale": self.scale,
            "center": list(self.center),
            "label": self.label,
        }

    def parts(self) -> List[Primitive]:
        return [Transformed(base=p, scale=self.scale, center=self.center, label=p.label) for p in self.base.parts()]


def intersect_labeled(shape: Primitive, origins: np.ndarray, dirs: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """First hit distance and the label of the hit part (0 on miss)."""
    if isinstance(shape, (Union, Transformed)):
        return shape.intersect_labeled(origins, dirs)
    t = shape.intersect(origins, dirs)
    return t, np.where(np.isfinite(t), shape.label, 0)


_KINDS = {cls.kind: cls for cls in (Sphere, Plane, Box, Room)}


def primitive_from_dict(data: Dict) -> Primitive:
    kind = data.get("kind")
    if kind == "union":
        return Union(members=[primitive_from_dict(m) for m in data["members"]], label=data.get("label", 1))
    if kind == "transformed":
        return Transformed(
            base=primitive_from_dict(data["base"]),
            scale=float(data["scale"]),
            center=tuple(float(v) for v in data["center"]),
            label=data.get("label", 1),
        )
    if kind not in _KINDS:
        raise ValidationError(f"unknown primitive kind: {kind!r}")
    kwargs = {k: v for k, v in data.items() if k != "kind"}
    for key in ("center", "normal", "half_extents"):
        if key in kwargs:
            kwargs[key] = tuple(float(v) for v in kwargs[key])
    return _KINDS[kind](**kwargs)
