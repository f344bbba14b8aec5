# tests/conftest.py
"""
Shared fixtures - cameras, small rigs and a tiny synthetic dataset
"""

import math

import pytest
import torch

from splat_avatar.config.app_config import Config
from splat_avatar.config.training_config import TrainingConfig
from splat_avatar.models.geometry_model import Camera, FrameBatch, GaussianWorld, RigMesh, SplatSet
from splat_avatar.services.dataset_service import synth_dataset


def pytest_collection_modifyitems(config, items):
    if Config.RUN_SLOW:
        return
    skip_slow = pytest.mark.skip(reason="set SPLAT_AVATAR_RUN_SLOW=1 to run")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


def make_camera(size: int = 64, focal: float = 100.0, **kwargs) -> Camera:
    return Camera(fx=focal, fy=focal, cx=size / 2.0, cy=size / 2.0, width=size, height=size, **kwargs)


def isotropic_gaussian(mean, sigma: float, opacity: float = 0.9, color=(1.0, 1.0, 1.0)) -> GaussianWorld:
    s2 = sigma * sigma
    return GaussianWorld(
        mean=tuple(mean),
        cov=((s2, 0.0, 0.0), (0.0, s2, 0.0), (0.0, 0.0, s2)),
        opacity=opacity,
        color=tuple(color),
    )


def identity_frames(count: int = 1, depth: float = 4.0) -> FrameBatch:
    """Frames at (0, 0, depth) with identity rotation and unit scale"""
    origin = torch.zeros((count, 3), dtype=torch.float64)
    origin[:, 2] = depth
    return FrameBatch(
        origin=origin,
        rotation=torch.eye(3, dtype=torch.float64).expand(count, 3, 3).clone(),
        scale=torch.ones(count, dtype=torch.float64),
    )


def random_splats(n: int, seed: int, spread: float = 0.6, scale=(0.08, 0.3)) -> SplatSet:
    """Random splats bound to frame 0, all in front of an identity camera"""
    g = torch.Generator().manual_seed(seed)
    lo, hi = scale
    return SplatSet(
        mu=(torch.rand((n, 3), generator=g, dtype=torch.float64) - 0.5) * 2.0 * spread,
        rot=torch.nn.functional.normalize(torch.randn((n, 4), generator=g, dtype=torch.float64), dim=-1),
        log_scale=torch.log(lo + (hi - lo) * torch.rand((n, 3), generator=g, dtype=torch.float64)),
        opacity_logit=torch.randn(n, generator=g, dtype=torch.float64),
        color=torch.rand((n, 3), generator=g, dtype=torch.float64),
        binding=torch.zeros(n, dtype=torch.long),
    )


def plane_mesh(depth: float = 2.0, half: float = 2.0) -> RigMesh:
    """Square facing an identity camera; winding gives camera-space normal (0, 0, -1)"""
    verts = [(-half, -half, depth), (-half, half, depth), (half, -half, depth), (half, half, depth)]
    return RigMesh.from_arrays([[0, 1, 2], [1, 3, 2]], [verts])


def small_config(**overrides) -> TrainingConfig:
    values = dict(
        iterations=2,
        densify_until=0,
        densify_interval=1,
        views_per_iter=2,
        log_every=1,
        checkpoint_every=1000,
    )
    values.update(overrides)
    return TrainingConfig(**values)


@pytest.fixture
def camera() -> Camera:
    return make_camera()


@pytest.fixture
def rot_z90():
    c, s = math.cos(math.pi / 2), math.sin(math.pi / 2)
    return ((c, -s, 0.0), (s, c, 0.0), (0.0, 0.0, 1.0))


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    """3 frames, 3 held-out cameras, 32 x 32 images"""
    root = tmp_path_factory.mktemp("tiny_dataset")
    return synth_dataset(seed=0, n_frames=3, n_heldout_cams=3, out_dir=root, image_size=32)
