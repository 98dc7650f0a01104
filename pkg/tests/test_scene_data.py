"""Scene loading/validation, normalization, rays and neighbor selection."""
import sys
from pathlib import Path

# Ensure project root import
ROOT = Path(__file__).resolve().parent.parent
if str(ROOT) not in sys.path:
    sys.path.append(str(ROOT))

import numpy as np
import pytest
import torch

from utils.errors import DegenerateSceneError, SceneLoadError, ValidationError
from utils.scene_data import (
    CameraView,
    Ray,
    Scene,
    SimilarityTransform,
    load_scene,
    normalize_scene,
    pixel_dirs,
    pixel_ray,
    ray_depth_to_z,
    read_float_map,
    save_scene,
    select_neighbor_views,
    sphere_near_far,
    write_float_map,
)


def test_float_map_roundtrip(tmp_path):
    data = np.random.default_rng(0).normal(size=(5, 7, 3)).astype(np.float32)
    write_float_map(tmp_path / "a.rfl", data)
    assert np.array_equal(read_float_map(tmp_path / "a.rfl"), data)
    depth = np.arange(12, dtype=np.float32).reshape(3, 4)
    write_float_map(tmp_path / "d.rfl", depth)
    assert read_float_map(tmp_path / "d.rfl").shape == (3, 4)


def test_float_map_bad_magic(tmp_path):
    (tmp_path / "bad.rfl").write_bytes(b"NOPE" + bytes(16))
    with pytest.raises(SceneLoadError):
        read_float_map(tmp_path / "bad.rfl")


def test_camera_view_rejects_bad_rotation(view_factory):
    v = view_factory((0.0, -1.0, 0.0), (0.0, 0.0, 0.0))
    with pytest.raises(ValidationError):
        CameraView(K=v.K, R=v.R * 1.01, t=v.t, image=v.image, prior_normals=v.prior_normals, valid_mask=v.valid_mask)


def test_camera_view_rejects_non_unit_priors(view_factory):
    v = view_factory((0.0, -1.0, 0.0), (0.0, 0.0, 0.0))
    priors = np.zeros_like(v.prior_normals)
    priors[..., 2] = 0.5
    with pytest.raises(ValidationError):
        CameraView(K=v.K, R=v.R, t=v.t, image=v.image, prior_normals=priors, valid_mask=np.ones_like(v.valid_mask))


def test_camera_view_rejects_shape_mismatch(view_factory):
    v = view_factory((0.0, -1.0, 0.0), (0.0, 0.0, 0.0))
    with pytest.raises(ValidationError):
        CameraView(K=v.K, R=v.R, t=v.t, image=v.image, prior_normals=v.prior_normals[:-1], valid_mask=v.valid_mask)


def test_project_principal_point(view_factory):
    v = view_factory((0.0, -2.0, 0.0), (0.0, 0.0, 0.0))
    uv = v.project(np.zeros((1, 3)))
    assert np.allclose(uv[0], v.K[:2, 2])


def test_similarity_transform_compose_and_inverse():
    a = SimilarityTransform(2.0, (1.0, 0.0, -1.0))
    b = SimilarityTransform(0.5, (0.3, 0.2, 0.1))
    x = np.random.default_rng(1).normal(size=(10, 3))
    assert np.allclose(a.then(b).apply(x), b.apply(a.apply(x)))
    assert np.allclose(a.apply_inverse(a.apply(x)), x)
    assert np.allclose(a.inverse().apply(a.apply(x)), x)
    homog = np.concatenate([x, np.ones((10, 1))], axis=1) @ a.matrix().T
    assert np.allclose(homog[:, :3], a.apply(x))


def test_normalize_scene_fits_unit_sphere(small_room):
    scene, transform = normalize_scene(small_room)
    centers = np.stack([v.center for v in scene.views])
    assert np.linalg.norm(centers, axis=-1).max() <= 1.0
    corners = transform.apply(np.asarray(small_room.roi))
    assert np.linalg.norm(corners, axis=-1).max() == pytest.approx(0.9, abs=1e-9)
    assert scene.bound_radius == 1.0
    # depths scale with the scene
    assert np.allclose(scene.views[0].gt_depth, small_room.views[0].gt_depth * transform.scale)


def test_normalize_scene_is_idempotent(small_room):
    once, _ = normalize_scene(small_room)
    twice, second = normalize_scene(once)
    assert second.scale == pytest.approx(1.0, abs=1e-6)
    assert np.allclose(second.center, 0.0, atol=1e-6)
    for a, b in zip(once.views, twice.views):
        assert np.allclose(a.center, b.center, atol=1e-6)


def test_normalize_rejects_coincident_cameras(view_factory):
    v = view_factory((0.0, -1.0, 0.0), (0.0, 0.0, 0.0))
    with pytest.raises(DegenerateSceneError):
        normalize_scene(Scene(views=[v, v]))


def test_sphere_near_far():
    o = torch.tensor([[0.0, 0.0, 0.0], [0.0, 0.0, -3.0]])
    d = torch.tensor([[1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
    near, far = sphere_near_far(o, d, 1.0)
    assert torch.allclose(near, torch.tensor([0.0, 2.0]))
    assert torch.allclose(far, torch.tensor([1.0, 4.0]))


def test_pixel_ray_center_is_optical_axis(view_factory):
    v = view_factory((0.0, -0.5, 0.0), (0.0, 0.0, 0.0), width=33, height=25)
    ray = pixel_ray(v, (16.0, 12.0))
    assert np.allclose(ray.direction, v.optical_axis)
    assert ray.near == 0.0
    assert ray.far == pytest.approx(1.0 + 0.5)


def test_pixel_ray_outside_image(view_factory):
    v = view_factory((0.0, -0.5, 0.0), (0.0, 0.0, 0.0))
    with pytest.raises(ValidationError):
        pixel_ray(v, (-1.0, 0.0))


def test_ray_validation():
    with pytest.raises(ValidationError):
        Ray(origin=np.zeros(3), direction=np.array([0.0, 0.0, 2.0]), near=0.0, far=1.0)
    with pytest.raises(ValidationError):
        Ray(origin=np.zeros(3), direction=np.array([0.0, 0.0, 1.0]), near=1.0, far=1.0)


def test_pixel_dirs_batched_matches_pixel_ray(view_factory):
    v = view_factory((0.2, -0.5, 0.1), (0.0, 0.0, 0.0))
    uv = torch.tensor([[3.0, 4.0], [20.0, 10.0]], dtype=torch.float64)
    K_inv = torch.as_tensor(v.K_inv).expand(2, 3, 3)
    R = torch.as_tensor(v.R).expand(2, 3, 3)
    dirs = pixel_dirs(K_inv, R, uv).numpy()
    for k in range(2):
        assert np.allclose(dirs[k], pixel_ray(v, uv[k].tolist()).direction)


def test_ray_depth_to_z():
    assert ray_depth_to_z(np.array([2.0]), np.array([0.5]))[0] == pytest.approx(1.0)


def test_save_and_load_roundtrip(tmp_path, small_room):
    save_scene(small_room, tmp_path / "scene")
    loaded = load_scene(tmp_path / "scene")
    assert len(loaded.views) == len(small_room.views)
    a, b = small_room.views[3], loaded.views[3]
    assert np.allclose(a.R, b.R) and np.allclose(a.t, b.t) and np.allclose(a.K, b.K)
    assert np.array_equal(a.valid_mask, b.valid_mask)
    assert np.allclose(a.prior_normals, b.prior_normals)
    assert np.abs(a.image - b.image).max() <= 1.0 / 255.0 + 1e-6
    assert loaded.gt_mesh is not None and loaded.analytic_sdf is not None
    assert np.allclose(loaded.roi, small_room.roi)


def test_load_missing_pose_names_frame(tmp_path, small_room):
    root = save_scene(small_room, tmp_path / "scene")
    (root / "pose" / "000002.txt").unlink()
    with pytest.raises(SceneLoadError, match="000002"):
        load_scene(root)


def test_load_missing_directory(tmp_path):
    with pytest.raises(SceneLoadError):
        load_scene(tmp_path / "nope")


def test_prior_nan_pixels_become_invalid(tmp_path, small_room):
    root = save_scene(small_room, tmp_path / "scene")
    normals = read_float_map(root / "normal" / "000000.rfl")
    normals[0, 0] = np.nan
    write_float_map(root / "normal" / "000000.rfl", normals)
    loaded = load_scene(root)
    assert not loaded.views[0].valid_mask[0, 0]


def test_neighbors_nearest_first(view_factory):
    views = [view_factory((x, -1.0, 0.0), (x, 0.0, 0.0), name=str(i)) for i, x in enumerate([0.0, 0.1, 0.3, 0.6])]
    scene = Scene(views=views)
    assert select_neighbor_views(scene, 0, 2) == [1, 2]
    assert select_neighbor_views(scene, 3, 1) == [2]


def test_neighbors_prefer_small_angle(view_factory):
    ref = view_factory((0.0, -1.0, 0.0), (0.0, 0.0, 0.0))
    turned = view_factory((0.05, -1.0, 0.0), (5.0, -1.0, 0.0))   # close but looking sideways
    aligned = view_factory((0.3, -1.0, 0.0), (0.3, 0.0, 0.0))
    scene = Scene(views=[ref, turned, aligned])
    assert select_neighbor_views(scene, 0, 1) == [2]


def test_neighbors_need_enough_views(view_factory):
    views = [view_factory((x, -1.0, 0.0), (x, 0.0, 0.0)) for x in (0.0, 0.1)]
    with pytest.raises(ValidationError):
        select_neighbor_views(Scene(views=views), 0, 2)
    with pytest.raises(ValidationError):
        select_neighbor_views(Scene(views=views), 0, 0)


def test_neighbors_on_a_circular_trajectory(view_factory):
    n = 12
    angles = 2.0 * np.pi * np.arange(n) / n
    views = [view_factory((np.cos(a), np.sin(a), 0.3), (0.0, 0.0, 0.0), name=f"{i:06d}") for i, a in enumerate(angles)]
    scene = Scene(views=views)
    for k in range(n):
        assert sorted(select_neighbor_views(scene, k, 2)) == sorted([(k - 1) % n, (k + 1) % n])
