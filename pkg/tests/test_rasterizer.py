# tests/test_rasterizer.py
import math
import os
import time

import pytest
import torch
from hypothesis import given, settings, strategies as st

from splat_avatar.core.geometry import local_to_global_batch, quaternion_to_matrix
from splat_avatar.core import rasterizer
from splat_avatar.core.rasterizer import ALPHA_MAX, TILE_SIZE, bin_tiles, naive_rasterize, rasterize
from splat_avatar.core.projection import project_gaussians
from splat_avatar.models.geometry_model import Camera, GaussianBatch

from conftest import identity_frames, isotropic_gaussian, make_camera, random_splats

RED = (1.0, 0.0, 0.0)
GREEN = (0.0, 1.0, 0.0)


def _scene(n: int, seed: int) -> GaussianBatch:
    return local_to_global_batch(random_splats(n, seed), identity_frames())


def _permute(batch: GaussianBatch, perm: torch.Tensor) -> GaussianBatch:
    return GaussianBatch(mean=batch.mean[perm], cov=batch.cov[perm], opacity=batch.opacity[perm], color=batch.color[perm])


def test_empty_scene_is_black(camera):
    out = rasterize([], camera)
    assert out.color.shape == (64, 64, 3)
    assert torch.count_nonzero(out.color) == 0
    assert torch.count_nonzero(out.alpha) == 0


def test_single_splat_matches_naive(camera):
    g = [isotropic_gaussian((0, 0, 5), 0.2, opacity=0.9)]
    tiled, naive = rasterize(g, camera), naive_rasterize(g, camera)
    assert (tiled.color - naive.color).abs().max() <= 1e-5
    assert (tiled.alpha - naive.alpha).abs().max() <= 1e-5
    assert tiled.color.max() > 0.5


def test_front_splat_clamped_at_alpha_max():
    cam = Camera(fx=100, fy=100, cx=32.5, cy=32.5, width=64, height=64)
    front = isotropic_gaussian((0, 0, 5), 1.0, opacity=0.995, color=RED)
    back = isotropic_gaussian((0, 0, 6), 1.0, opacity=0.98, color=GREEN)
    out = rasterize([back, front], cam)
    pixel = out.color[32, 32]
    assert pixel[0].item() == pytest.approx(ALPHA_MAX, abs=1e-3)
    assert pixel[1].item() == pytest.approx(1.0 - ALPHA_MAX, abs=1e-3)
    assert pixel[2].item() == 0.0


@settings(max_examples=200, deadline=None)
@given(
    st.integers(min_value=1, max_value=50),
    st.integers(min_value=0, max_value=10_000),
    st.sampled_from([16, 33, 48, 64]),
)
def test_tiles_match_naive_reference(n, seed, size):
    cam = make_camera(size=size, focal=1.25 * size)
    scene = _scene(n, seed)
    tiled, naive = rasterize(scene, cam), naive_rasterize(scene, cam)
    assert (tiled.color - naive.color).abs().max() <= 1e-5
    assert (tiled.alpha - naive.alpha).abs().max() <= 1e-5


def test_non_multiple_of_tile_size():
    cam = make_camera(size=TILE_SIZE * 2 + 5, focal=50.0)
    scene = _scene(20, 3)
    assert (rasterize(scene, cam).color - naive_rasterize(scene, cam).color).abs().max() <= 1e-5


def test_input_order_is_irrelevant(camera):
    scene = _scene(30, 11)
    perm = torch.randperm(30, generator=torch.Generator().manual_seed(0))
    assert torch.equal(rasterize(scene, camera).color, rasterize(_permute(scene, perm), camera).color)


def test_content_identical_splats_are_symmetric(camera):
    g = isotropic_gaussian((0, 0, 5), 0.2, opacity=0.5)
    assert torch.equal(rasterize([g, g], camera).color, rasterize([g, g], camera).color)


def test_thread_count_does_not_change_pixels(camera):
    scene = _scene(40, 5)
    serial = rasterize(scene, camera, workers=1).color
    assert torch.equal(serial, rasterize(scene, camera, workers=4).color)
    assert torch.equal(serial, rasterize(scene, camera, workers=3).color)


def test_joint_rigid_motion_leaves_image_unchanged(camera):
    scene = _scene(25, 7)
    Q = quaternion_to_matrix(torch.tensor([0.9, 0.1, -0.3, 0.2], dtype=torch.float64))
    s = torch.tensor([0.5, -1.0, 2.0], dtype=torch.float64)
    moved = GaussianBatch(
        mean=scene.mean @ Q.T + s,
        cov=Q @ scene.cov @ Q.T,
        opacity=scene.opacity,
        color=scene.color,
    )
    R = camera.rotation_tensor() @ Q.T
    t = camera.translation_tensor() - R @ s
    moved_cam = camera.model_copy(update={
        "rotation": tuple(tuple(row) for row in R.tolist()),
        "translation": tuple(t.tolist()),
    })
    diff = (rasterize(scene, camera).color - rasterize(moved, moved_cam).color).abs().max()
    assert diff <= 1e-4


def test_alpha_is_bounded_and_grows_front_to_back(camera):
    scene = _scene(20, 2)
    depth = project_gaussians(scene, camera).depth
    order = torch.argsort(depth)
    previous = torch.zeros((64, 64, 1), dtype=torch.float64)
    for k in range(1, len(order) + 1):
        alpha = rasterize(_permute(scene, order[:k]), camera).alpha
        assert alpha.max() <= 1.0
        assert (alpha >= previous - 1e-12).all()
        previous = alpha


def test_binning_covers_the_footprint():
    mean2d = torch.tensor([[20.0, 20.0]], dtype=torch.float64)
    bins = bin_tiles(mean2d, torch.tensor([10.0], dtype=torch.float64), 64, 64)
    assert bins.tile_ids.tolist() == [0, 1, 4, 5]
    assert bins.counts.tolist() == [1, 1, 1, 1]
    assert sum(len(batch) for batch in bins.batches) == 4




def test_batch_grouping_does_not_change_the_image(camera, monkeypatch):
    scene = _scene(40, 13)
    grouped = rasterize(scene, camera)
    monkeypatch.setattr(rasterizer, "BATCH_ELEMENTS", 1)
    single_tiles = rasterize(scene, camera)
    assert (grouped.color - single_tiles.color).abs().max() <= 1e-12
    assert (grouped.alpha - single_tiles.alpha).abs().max() <= 1e-12


@pytest.fixture
def one_op_thread():
    before = torch.get_num_threads()
    torch.set_num_threads(1)
    yield
    torch.set_num_threads(before)


def _best_render_time(scene: GaussianBatch, cam: Camera, workers: int, repeats: int = 3) -> float:
    rasterize(scene, cam, workers=workers)
    times = []
    for _ in range(repeats):
        start = time.perf_counter()
        rasterize(scene, cam, workers=workers)
        times.append(time.perf_counter() - start)
    return min(times)


@pytest.mark.slow
@pytest.mark.skipif((os.cpu_count() or 1) < 8, reason="needs 8 cores")
def test_fifty_thousand_splats_render_time(one_op_thread):
    cam = Camera(fx=600.0, fy=600.0, cx=401.0, cy=275.0, width=802, height=550)
    g = torch.Generator().manual_seed(0)
    n = 50_000
    scale = math.exp(-4.5)
    extent = torch.tensor([6.6, 4.5, 1.0], dtype=torch.float64)
    scene = GaussianBatch(
        mean=(torch.rand((n, 3), generator=g, dtype=torch.float64) - 0.5) * extent + torch.tensor([0.0, 0.0, 5.0]),
        cov=torch.eye(3, dtype=torch.float64).expand(n, 3, 3) * scale ** 2,
        opacity=torch.full((n,), 0.5, dtype=torch.float64),
        color=torch.rand((n, 3), generator=g, dtype=torch.float64),
    )
    serial = _best_render_time(scene, cam, workers=1)
    parallel = _best_render_time(scene, cam, workers=8)
    print(f"50k splats at 802x550: {serial * 1000:.1f} ms serial, {parallel * 1000:.1f} ms on 8 workers")
    assert parallel < 0.25
    assert serial / parallel >= 3.0
