# tests/test_projection.py
import pytest
import torch

from splat_avatar.core.projection import LOW_PASS, project_gaussian, project_gaussians, support_sigmas
from splat_avatar.models.geometry_model import GaussianBatch

from conftest import isotropic_gaussian, make_camera


def test_on_axis_mean_projects_to_principal_point(camera):
    p = project_gaussian(isotropic_gaussian((0, 0, 5), 0.1), camera)
    assert p is not None
    assert p.mean2d == pytest.approx((32.0, 32.0))
    assert p.depth == pytest.approx(5.0)


@pytest.mark.parametrize("sigma,depth", [(0.1, 5.0), (0.05, 2.0), (0.3, 8.0)])
def test_isotropic_cov2d_closed_form(camera, sigma, depth):
    p = project_gaussian(isotropic_gaussian((0, 0, depth), sigma), camera)
    expected = (camera.fx * sigma / depth) ** 2 + LOW_PASS
    (a, b), (_, c) = p.cov2d
    assert a == pytest.approx(expected, rel=1e-12)
    assert c == pytest.approx(expected, rel=1e-12)
    assert b == pytest.approx(0.0, abs=1e-12)


def test_behind_camera_is_culled(camera):
    assert project_gaussian(isotropic_gaussian((0, 0, -1), 0.1), camera) is None


def test_near_plane_is_culled(camera):
    assert project_gaussian(isotropic_gaussian((0, 0, 0.005), 0.1), camera) is None


def test_far_off_screen_is_culled(camera):
    assert project_gaussian(isotropic_gaussian((50, 0, 5), 0.1), camera) is None


def test_ellipse_overlapping_the_border_stays_visible():
    cam = make_camera(size=64)
    # mean a few pixels left of the image, footprint reaches inside
    g = isotropic_gaussian((-1.7, 0, 5), 0.1)
    p = project_gaussian(g, cam)
    assert p is not None
    assert p.mean2d[0] < 0


def test_translucent_splat_is_culled(camera):
    assert project_gaussian(isotropic_gaussian((0, 0, 5), 0.1, opacity=0.001), camera) is None


def test_support_radius_grows_with_opacity():
    sigmas = support_sigmas(torch.tensor([0.01, 0.5, 0.999], dtype=torch.float64))
    assert sigmas[0] == pytest.approx(3.0)
    assert sigmas[1] >= 3.0
    assert sigmas[2] > sigmas[1]


def test_batch_matches_single(camera):
    gaussians = [isotropic_gaussian((0.1 * i, -0.05 * i, 4 + i), 0.1 + 0.05 * i) for i in range(4)]
    batch = project_gaussians(GaussianBatch.from_gaussians(gaussians), camera)
    for i, g in enumerate(gaussians):
        single = project_gaussian(g, camera)
        assert batch.mean2d[i].tolist() == pytest.approx(single.mean2d)
        assert bool(batch.visible[i])
