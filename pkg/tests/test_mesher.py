"""Marching-cubes extraction, bounds handling, crops and mesh IO."""
import sys
from pathlib import Path

# Ensure project root import
ROOT = Path(__file__).resolve().parent.parent
if str(ROOT) not in sys.path:
    sys.path.append(str(ROOT))

import numpy as np
import pytest
import trimesh

from utils.errors import MeshExtractionError, ValidationError
from utils.fields import AnalyticField
from utils.mesher import crop_mesh, extract_fields, extract_mesh, load_mesh, save_mesh
from utils.primitives import Sphere
from utils.scene_data import SimilarityTransform


def _radial_error(mesh, center=(0.0, 0.0, 0.0), radius=0.5):
    r = np.linalg.norm(np.asarray(mesh.vertices) - np.asarray(center), axis=-1)
    return np.abs(r - radius).max()


def test_extract_fields_matches_sdf():
    field = AnalyticField(Sphere(radius=0.5))
    u = extract_fields(field, np.array([-1.0, -1.0, -1.0]), np.array([1.0, 1.0, 1.0]), 17, chunk=5)
    assert u.shape == (17, 17, 17)
    assert u[8, 8, 8] == pytest.approx(-0.5)
    assert u[0, 8, 8] == pytest.approx(0.5)
    assert u[16, 16, 16] == pytest.approx(np.sqrt(3.0) - 0.5, abs=1e-6)


def test_sphere_mesh_within_two_cells():
    mesh = extract_mesh(AnalyticField(Sphere(radius=0.5)), resolution=64)
    assert len(mesh.faces) > 0
    cell = 2.0 / 63.0
    assert _radial_error(mesh) < 2.0 * cell


def test_resolution_convergence():
    field = AnalyticField(Sphere(radius=0.5))
    coarse = _radial_error(extract_mesh(field, resolution=24))
    fine = _radial_error(extract_mesh(field, resolution=96))
    assert fine < coarse


def test_transform_maps_back_to_scene_units():
    transform = SimilarityTransform(0.5, (1.0, 0.0, 0.0))
    mesh = extract_mesh(AnalyticField(Sphere(radius=0.5)), resolution=48, transform=transform)
    # radius 0.5 in normalized units is 1.0 in scene units, centred at (1, 0, 0)
    assert _radial_error(mesh, center=(1.0, 0.0, 0.0), radius=1.0) < 4.0 * 2.0 / 47.0


def test_no_crossing_gives_empty_mesh():
    mesh = extract_mesh(AnalyticField(Sphere(center=(5.0, 0.0, 0.0), radius=0.5)), resolution=16)
    assert len(mesh.faces) == 0


def test_sub_bounds():
    bounds = np.array([[0.0, -0.8, -0.8], [0.8, 0.8, 0.8]])
    mesh = extract_mesh(AnalyticField(Sphere(radius=0.5)), resolution=32, bounds=bounds)
    assert len(mesh.faces) > 0
    assert mesh.vertices[:, 0].min() >= -1e-9


def test_invalid_requests():
    field = AnalyticField(Sphere(radius=0.5))
    with pytest.raises(ValidationError):
        extract_mesh(field, resolution=8)
    with pytest.raises(ValidationError):
        extract_mesh(field, resolution=16, bounds=np.array([[-2.0, -1.0, -1.0], [1.0, 1.0, 1.0]]))
    with pytest.raises(ValidationError):
        extract_mesh(field, resolution=16, bounds=np.array([[0.5, -1.0, -1.0], [0.5, 1.0, 1.0]]))
    with pytest.raises(MeshExtractionError):
        extract_mesh(AnalyticField(Sphere(radius=0.5), scale=float("nan")), resolution=16)


def test_crop_keeps_faces_touching_region():
    mesh = trimesh.creation.icosphere(subdivisions=3, radius=0.5)
    half = crop_mesh(mesh, [[0.0, -1.0, -1.0], [1.0, 1.0, 1.0]])
    assert 0 < len(half.faces) < len(mesh.faces)
    assert np.all((half.vertices[half.faces][..., 0] >= 0.0).any(axis=-1))
    # no dangling vertices survive
    assert len(np.unique(half.faces)) == len(half.vertices)
    assert len(crop_mesh(mesh, [[2.0, 2.0, 2.0], [3.0, 3.0, 3.0]]).faces) == 0


def test_crop_outside_keeps_the_complement():
    mesh = trimesh.creation.icosphere(subdivisions=3, radius=0.5)
    region = [[0.0, -1.0, -1.0], [1.0, 1.0, 1.0]]
    rest = crop_mesh(mesh, region, outside=True)
    assert len(rest.faces) + len(crop_mesh(mesh, region).faces) == len(mesh.faces)
    assert np.all(rest.vertices[:, 0] < 0.0)
    assert len(crop_mesh(mesh, [[-1.0, -1.0, -1.0], [1.0, 1.0, 1.0]], outside=True).faces) == 0


def test_save_and_load(tmp_path):
    mesh = trimesh.creation.icosphere(subdivisions=2, radius=0.5)
    path = save_mesh(mesh, tmp_path / "out" / "mesh.ply")
    again = load_mesh(path)
    assert len(again.faces) == len(mesh.faces)
    assert np.allclose(again.vertices, mesh.vertices)
    with pytest.raises(ValidationError):
        load_mesh(tmp_path / "missing.ply")
