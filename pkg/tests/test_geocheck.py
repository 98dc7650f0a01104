"""Geometric check: plane homographies, ZNCC, indicators and the persistent prior mask."""
import sys
from pathlib import Path

# Ensure project root import
ROOT = Path(__file__).resolve().parent.parent
if str(ROOT) not in sys.path:
    sys.path.append(str(ROOT))

import numpy as np
import pytest
import torch
from scipy.spatial.transform import Rotation

from utils.errors import DegeneratePlaneError, MaskContractError, ValidationError
from utils.geocheck import (
    ACCEPTED,
    REJECTED,
    UNTESTED,
    GeoChecker,
    PlaneHypothesis,
    PriorMask,
    decide,
    evaluate_indicator,
    homography,
    ncc,
    ncc_dump,
    update_prior_mask,
    zncc,
)
from utils.primitives import Plane
from utils.scene_data import Scene
from utils.synthetic import SyntheticSpec, cast_view, shade

SIZE = 128
FOCAL = 120.0
FOV = float(np.degrees(2.0 * np.arctan(0.5 * SIZE / FOCAL)))
CENTER_PX = (64.0, 64.0)


@pytest.fixture(scope="module")
def plane_pair():
    """Two cameras at (+-0.6, 0, 1) looking at a noise-textured ground plane z = 0.

    Single-octave noise with cells of about 3 px.
    """
    from conftest import make_view

    spec = SyntheticSpec(scene="plane", texture="noise", noise_cell=0.03, noise_octaves=1)
    table = np.random.default_rng(0).random(4096)
    shape = Plane(normal=(0.0, 0.0, 1.0), offset=0.0, extent=5.0)
    views, depths = [], []
    for x in (0.6, -0.6):
        blank = make_view((x, 0.0, 1.0), (0.0, 0.0, 0.0), width=SIZE, height=SIZE, fov=FOV)
        cast = cast_view(shape, blank.K, blank.R, blank.t, SIZE, SIZE)
        hit = cast["hit"]
        depth = np.where(hit, cast["depth"], 0.0)
        points = cast["origin"][None, :] + depth[:, None] * cast["dirs"]
        normals = np.tile([0.0, 0.0, 1.0], (len(points), 1))
        color = np.zeros_like(points)
        color[hit] = shade(points[hit], normals[hit], cast["dirs"][hit], np.ones(hit.sum(), dtype=int), spec, table)
        views.append(make_view((x, 0.0, 1.0), (0.0, 0.0, 0.0), width=SIZE, height=SIZE, fov=FOV,
                               image=color.reshape(SIZE, SIZE, 3).astype(np.float32), name=f"{len(views):06d}"))
        depths.append(depth.reshape(SIZE, SIZE))
    return Scene(views=views), depths


def _plane_normal_cam(view, tilt_deg=0.0):
    n = Rotation.from_euler("x", tilt_deg, degrees=True).apply([0.0, 0.0, 1.0])
    return view.R @ n


def test_homography_reprojects_plane_points(view_factory):
    vi = view_factory((0.3, -1.0, 0.8), (0.0, 0.0, 0.0), width=64, height=48)
    vj = view_factory((-0.4, -0.9, 0.7), (0.1, 0.0, 0.0), width=64, height=48)
    n_world = np.array([0.2, -0.1, 1.0]) / np.linalg.norm([0.2, -0.1, 1.0])
    anchor = np.array([0.05, 0.02, 0.01])
    q = vi.project(anchor[None])[0]
    ray = vi.K_inv @ np.array([q[0], q[1], 1.0])
    depth = np.linalg.norm(vi.R @ anchor + vi.t)
    H = homography(vi, vj, PlaneHypothesis(normal=vi.R @ n_world, depth=depth, view_dir=ray))

    tangent = np.cross(n_world, [1.0, 0.0, 0.0])
    for p in (anchor, anchor + 0.1 * tangent, anchor - 0.07 * np.cross(n_world, tangent)):
        src = vi.project(p[None])[0]
        mapped = H @ np.array([src[0], src[1], 1.0])
        assert np.allclose(mapped[:2] / mapped[2], vj.project(p[None])[0], atol=1e-6)


def test_homography_rejects_edge_on_plane(view_factory):
    vi = view_factory((0.0, -1.0, 0.0), (0.0, 0.0, 0.0))
    vj = view_factory((0.2, -1.0, 0.0), (0.2, 0.0, 0.0))
    # normal perpendicular to the central viewing ray
    hyp = PlaneHypothesis(normal=np.array([1.0, 0.0, 0.0]), depth=1.0, view_dir=np.array([0.0, 0.0, 1.0]))
    with pytest.raises(DegeneratePlaneError):
        homography(vi, vj, hyp)
    with pytest.raises(ValidationError):
        PlaneHypothesis(normal=np.array([0.0, 0.0, -1.0]), depth=0.0, view_dir=np.array([0.0, 0.0, 1.0]))


def _world_plane_hypothesis(view, n_world, anchor):
    x_cam = view.R @ anchor + view.t
    return PlaneHypothesis(normal=view.R @ n_world, depth=float(np.linalg.norm(x_cam)), view_dir=x_cam)


def test_homography_to_itself_is_identity(view_factory):
    vi = view_factory((0.3, -1.0, 0.8), (0.0, 0.0, 0.0), width=64, height=48)
    hyp = _world_plane_hypothesis(vi, np.array([0.0, 0.0, 1.0]), np.zeros(3))
    assert np.allclose(homography(vi, vi, hyp), np.eye(3), atol=1e-12)


def test_homographies_for_one_plane_invert_each_other(view_factory):
    vi = view_factory((0.3, -1.0, 0.8), (0.0, 0.0, 0.0), width=64, height=48)
    vj = view_factory((-0.4, -0.9, 0.7), (0.1, 0.0, 0.0), width=64, height=48)
    n_world = np.array([0.2, -0.1, 1.0]) / np.linalg.norm([0.2, -0.1, 1.0])
    anchor = np.array([0.05, 0.02, 0.01])
    H_ij = homography(vi, vj, _world_plane_hypothesis(vi, n_world, anchor))
    H_ji = homography(vj, vi, _world_plane_hypothesis(vj, n_world, anchor))
    loop = H_ji @ H_ij
    assert np.allclose(loop / loop[2, 2], np.eye(3), atol=1e-6)


def test_pure_rotation_ignores_the_plane(view_factory):
    vi = view_factory((0.0, -1.0, 0.5), (0.0, 0.0, 0.0), width=64, height=48)
    vj = view_factory((0.0, -1.0, 0.5), (0.3, 0.1, 0.0), width=64, height=48)
    floor = _world_plane_hypothesis(vi, np.array([0.0, 0.0, 1.0]), np.zeros(3))
    wall = _world_plane_hypothesis(vi, np.array([0.3, 0.9, 0.2]) / np.linalg.norm([0.3, 0.9, 0.2]),
                                   np.array([0.1, 0.4, 0.2]))
    assert np.allclose(homography(vi, vj, floor), homography(vi, vj, wall), atol=1e-9)


def test_zncc_properties():
    a = torch.rand(3, 121, generator=torch.Generator().manual_seed(0), dtype=torch.float64)
    scores, textured = zncc(a, 0.5 * a + 0.2)
    assert torch.allclose(scores, torch.ones(3, dtype=torch.float64))
    assert textured.all()
    scores, _ = zncc(a, 1.0 - a)
    assert torch.allclose(scores, -torch.ones(3, dtype=torch.float64))
    _, textured = zncc(a, torch.full_like(a, 0.4))
    assert not textured.any()


def test_decide():
    assert decide([], 0.6) is None
    assert decide([None, None], 0.6) is None
    assert decide([0.8, None, 0.5], 0.6) == 1
    assert decide([0.9, 0.2], 0.6) == 0


def test_true_plane_passes_check(plane_pair):
    scene, depths = plane_pair
    normal = _plane_normal_cam(scene.views[0])
    depth = float(depths[0][64, 64])
    assert evaluate_indicator(scene, 0, CENTER_PX, normal, depth, [1]) == 1


def test_tilted_normal_fails_check(plane_pair):
    scene, depths = plane_pair
    normal = _plane_normal_cam(scene.views[0], tilt_deg=60.0)
    depth = float(depths[0][64, 64])
    assert evaluate_indicator(scene, 0, CENTER_PX, normal, depth, [1]) == 0


def _scores_at(scene, depths, pixels, tilt_deg):
    vi, vj = scene.views
    out = []
    for u, v in pixels:
        hyp = PlaneHypothesis(normal=_plane_normal_cam(vi, tilt_deg), depth=float(depths[0][v, u]),
                              view_dir=vi.K_inv @ np.array([u, v, 1.0]))
        out.append(ncc(vi, vj, (float(u), float(v)), 11, homography(vi, vj, hyp)))
    return out


def test_ncc_on_true_plane_and_tilted_plane(plane_pair):
    scene, depths = plane_pair
    pixels = [(u, v) for u in (48, 64, 80) for v in (48, 64, 80)]
    true_scores = _scores_at(scene, depths, pixels, 0.0)
    tilted = _scores_at(scene, depths, pixels, 30.0)
    assert None not in true_scores and None not in tilted
    assert min(true_scores) >= 0.99
    assert float(np.mean(tilted)) < 0.8


def test_indicator_is_monotone_in_threshold(plane_pair):
    scene, depths = plane_pair
    normal = _plane_normal_cam(scene.views[0], tilt_deg=15.0)
    depth = float(depths[0][64, 64])
    indicators = [evaluate_indicator(scene, 0, CENTER_PX, normal, depth, [1], threshold=float(eps))
                  for eps in np.linspace(-1.0, 1.0, 41)]
    assert indicators[0] == 1 and indicators[-1] == 0
    assert all(a >= b for a, b in zip(indicators, indicators[1:]))


def test_patch_off_image_is_untested(plane_pair):
    scene, depths = plane_pair
    normal = _plane_normal_cam(scene.views[0])
    assert evaluate_indicator(scene, 0, (2.0, 2.0), normal, float(depths[0][2, 2]), [1]) is None


def test_batched_checker_matches_single_pixel(plane_pair):
    scene, depths = plane_pair
    checker = GeoChecker(scene, num_neighbors=1, dtype=torch.float64)
    assert checker.neighbors.tolist() == [[1], [0]]
    good = _plane_normal_cam(scene.views[0])
    bad = _plane_normal_cam(scene.views[0], tilt_deg=60.0)
    view_idx = torch.tensor([0, 0, 0])
    uv = torch.tensor([[64.0, 64.0], [64.0, 64.0], [2.0, 2.0]], dtype=torch.float64)
    normals = torch.as_tensor(np.stack([good, bad, good]))
    d = torch.tensor([depths[0][64, 64], depths[0][64, 64], depths[0][2, 2]], dtype=torch.float64)
    indicator, scores, valid = checker.indicator(view_idx, uv, normals, d)
    assert indicator.tolist() == [1, 0, -1]
    assert scores[0, 0] > 0.99
    assert valid[:2].all() and not valid[2].any()

    frame = ncc_dump(checker, view_idx, uv, normals, d)
    assert len(frame) == 3
    assert frame["indicator"].tolist() == [1, 0, -1]
    assert set(frame["neighbor"]) == {1}


def test_mask_rejection_is_absorbing():
    mask = PriorMask(1, 4, 5)
    mask.set_state(0, (1, 2), REJECTED)
    with pytest.raises(MaskContractError):
        mask.set_state(0, (1, 2), ACCEPTED)
    update_prior_mask(mask, 0, (1, 2), 1)
    assert mask.state(0, (1, 2)) == REJECTED
    update_prior_mask(mask, 0, (3, 0), None)
    assert mask.state(0, (3, 0)) == UNTESTED
    update_prior_mask(mask, 0, (3, 0), 1)
    assert mask.state(0, (3, 0)) == ACCEPTED
    with pytest.raises(ValidationError):
        mask.set_state(0, (0, 0), 7)


def test_mask_batch_apply():
    mask = PriorMask(2, 3, 3)
    view = np.array([0, 0, 1, 1, 1, 0])
    u = np.array([0, 1, 2, 2, 0, 2])
    v = np.array([0, 1, 2, 2, 0, 2])
    # (1, 2, 2) appears twice: the rejection wins
    new = mask.apply(view, u, v, np.array([1, 0, 1, 0, -1, -1]))
    assert new == 2
    assert mask.states[0, 0, 0] == ACCEPTED
    assert mask.states[0, 1, 1] == REJECTED
    assert mask.states[1, 2, 2] == REJECTED
    assert mask.states[1, 0, 0] == UNTESTED
    # a later keep cannot undo a rejection
    assert mask.apply(np.array([0]), np.array([1]), np.array([1]), np.array([1])) == 0
    assert mask.states[0, 1, 1] == REJECTED
    assert mask.counts() == {"untested": 15, "accepted": 1, "rejected": 2}

    omega = mask.omega(torch.tensor([0, 0, 1]), torch.tensor([0, 1, 0]), torch.tensor([0, 1, 0]))
    assert omega.tolist() == [True, False, True]
    img = mask.to_image(0)
    assert img[0, 0] == 255 and img[1, 1] == 0 and img[2, 0] == 128


def test_mask_shape_check(tmp_path):
    with pytest.raises(ValidationError):
        PriorMask(2, 3, 3, states=np.zeros((1, 3, 3), dtype=np.int8))
    paths = PriorMask(2, 3, 3).save_images(tmp_path / "masks", names=["a", "b"])
    assert [p.name for p in paths] == ["a.png", "b.png"]
