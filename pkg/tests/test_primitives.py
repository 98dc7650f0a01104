"""Analytic primitives: sign convention, ray hits, meshes and (de)serialization."""
import sys
from pathlib import Path

# Ensure project root import
ROOT = Path(__file__).resolve().parent.parent
if str(ROOT) not in sys.path:
    sys.path.append(str(ROOT))

import numpy as np
import pytest
import torch

from utils.errors import ValidationError
from utils.primitives import (
    Box,
    Plane,
    Room,
    Sphere,
    Transformed,
    Union,
    intersect_labeled,
    primitive_from_dict,
)


def test_sphere_sdf_sign():
    s = Sphere(radius=0.5)
    x = torch.tensor([[0.0, 0.0, 0.0], [0.5, 0.0, 0.0], [1.0, 0.0, 0.0]], dtype=torch.float64)
    assert torch.allclose(s.sdf(x), torch.tensor([-0.5, 0.0, 0.5], dtype=torch.float64))


def test_room_is_positive_inside():
    room = Room(half_extents=(2.0, 2.0, 1.25))
    # distance to the nearest wall (ceiling/floor at 1.25)
    assert room.sdf_np(np.zeros((1, 3)))[0] == pytest.approx(1.25)
    assert room.sdf_np(np.array([[3.0, 0.0, 0.0]]))[0] < 0.0
    # solid box is the negation
    assert Box(half_extents=(2.0, 2.0, 1.25)).sdf_np(np.zeros((1, 3)))[0] == pytest.approx(-1.25)


def test_plane_rejects_zero_normal():
    with pytest.raises(ValidationError):
        Plane(normal=(0.0, 0.0, 0.0))


def test_sphere_intersect_and_miss():
    s = Sphere(radius=0.5)
    o = np.array([[0.0, 0.0, 2.0], [0.0, 2.0, 2.0]])
    d = np.array([[0.0, 0.0, -1.0], [0.0, 0.0, -1.0]])
    t = s.intersect(o, d)
    assert t[0] == pytest.approx(1.5)
    assert np.isinf(t[1])


def test_room_intersect_from_inside():
    room = Room(half_extents=(2.0, 2.0, 1.25))
    t = room.intersect(np.zeros((2, 3)), np.array([[1.0, 0.0, 0.0], [0.0, 0.0, -1.0]]))
    assert np.allclose(t, [2.0, 1.25])


def test_union_labels_first_hit():
    room = Room(half_extents=(2.0, 2.0, 1.25), label=1)
    pillar = Box(center=(1.0, 0.0, 0.0), half_extents=(0.1, 0.1, 1.25), cap_z=False, label=2)
    shape = Union(members=[room, pillar])
    o = np.zeros((2, 3))
    d = np.array([[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]])
    t, labels = intersect_labeled(shape, o, d)
    assert t[0] == pytest.approx(0.9)
    assert labels.tolist() == [2, 1]


def test_transformed_matches_scaled_base():
    base = Sphere(center=(1.0, 2.0, 3.0), radius=2.0)
    tr = Transformed(base=base, scale=0.25, center=(1.0, 2.0, 3.0))
    x = torch.tensor([[0.5, 0.0, 0.0]], dtype=torch.float64)
    assert tr.sdf(x).item() == pytest.approx(0.0, abs=1e-12)
    t = tr.intersect(np.array([[0.0, 0.0, 2.0]]), np.array([[0.0, 0.0, -1.0]]))
    assert t[0] == pytest.approx(1.5)


def test_meshes_lie_on_zero_level_set():
    for shape in (Sphere(radius=0.5), Room(half_extents=(1.0, 1.5, 0.8)), Box(half_extents=(0.2, 0.3, 0.4))):
        mesh = shape.to_mesh()
        values = shape.sdf_np(np.asarray(mesh.vertices))
        assert np.abs(values).max() < 1e-3


def test_room_mesh_faces_inward():
    mesh = Room(half_extents=(1.0, 1.0, 1.0)).to_mesh()
    # inward normals point toward the centre
    to_center = -np.asarray(mesh.triangles_center)
    assert np.all(np.sum(mesh.face_normals * to_center, axis=-1) > 0)


def test_dict_roundtrip_of_composite():
    shape = Transformed(
        base=Union(members=[Room(half_extents=(2.0, 2.0, 1.0)), Box(center=(1.0, 0.5, 0.0), label=2)]),
        scale=0.4,
        center=(0.0, 0.0, 0.1),
    )
    again = primitive_from_dict(shape.to_dict())
    x = torch.rand(64, 3, dtype=torch.float64) * 2.0 - 1.0
    assert torch.allclose(shape.sdf(x), again.sdf(x))


def test_unknown_kind():
    with pytest.raises(ValidationError):
        primitive_from_dict({"kind": "torus"})
