"""Shared fixtures: small synthetic scenes and camera helpers."""
import sys
from pathlib import Path

# Ensure project root import
ROOT = Path(__file__).resolve().parent.parent
if str(ROOT) not in sys.path:
    sys.path.append(str(ROOT))

import numpy as np
import pytest
import torch

from utils.scene_data import CameraView
from utils.synthetic import SyntheticSpec, intrinsics, look_at, make_synthetic_scene


def make_view(eye, target, width=32, height=24, fov=70.0, image=None, name="v"):
    """A CameraView with blank data looking from `eye` to `target`."""
    R, t = look_at(np.asarray(eye, dtype=np.float64), np.asarray(target, dtype=np.float64))
    K = intrinsics(width, height, fov)
    if image is None:
        image = np.zeros((height, width, 3), dtype=np.float32)
    return CameraView(
        K=K,
        R=R,
        t=t,
        image=image,
        prior_normals=np.zeros((height, width, 3), dtype=np.float32),
        valid_mask=np.zeros((height, width), dtype=bool),
        name=name,
    )


@pytest.fixture
def view_factory():
    return make_view


@pytest.fixture(scope="session")
def small_room_spec():
    return SyntheticSpec(scene="box_room", num_views=8, width=32, height=24, seed=0)


@pytest.fixture(scope="session")
def small_room(small_room_spec):
    return make_synthetic_scene(small_room_spec)


@pytest.fixture(scope="session")
def small_pillar_spec():
    return SyntheticSpec(scene="box_room_pillar", num_views=8, width=32, height=24, seed=0, corrupt_priors=True)


@pytest.fixture(scope="session")
def small_pillar(small_pillar_spec):
    return make_synthetic_scene(small_pillar_spec)


@pytest.fixture(autouse=True)
def _torch_threads():
    torch.set_num_threads(1)
    yield
