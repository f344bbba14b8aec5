# splat_avatar/core/projection.py
"""
EWA projection of world-space Gaussians into a pinhole camera
"""

from typing import List, Optional, Union

import torch

from ..models.geometry_model import Camera, GaussianBatch, GaussianWorld
from ..models.image_model import Projected2D, ProjectedBatch

NEAR_PLANE = 0.01
LOW_PASS = 0.3
MIN_ALPHA = 1.0 / 255.0
SIGMA_EXTENT = 3.0
# Slack so pixels exactly on the support boundary land in a covering tile
EXTENT_MARGIN = 1e-3


def support_sigmas(opacity: torch.Tensor) -> torch.Tensor:
    """
    Mahalanobis radius beyond which opacity * G falls under 1/255

    Never smaller than the usual 3 sigma, so the binning extent always covers every
    pixel the blending step can touch.
    """
    ratio = torch.clamp(opacity * 255.0, min=1.0)
    return torch.clamp(torch.sqrt(2.0 * torch.log(ratio)), min=SIGMA_EXTENT)


def project_gaussians(gaussians: GaussianBatch, cam: Camera) -> ProjectedBatch:
    dtype = gaussians.mean.dtype
    W = cam.rotation_tensor(dtype)
    t = cam.translation_tensor(dtype)

    p_cam = gaussians.mean @ W.T + t
    x, y, z = p_cam.unbind(-1)
    in_front = z > NEAR_PLANE
    z_safe = torch.where(in_front, z, torch.ones_like(z))
    inv_z = 1.0 / z_safe

    zeros = torch.zeros_like(z)
    J = torch.stack([
        torch.stack([cam.fx * inv_z, zeros, -cam.fx * x * inv_z ** 2], dim=-1),
        torch.stack([zeros, cam.fy * inv_z, -cam.fy * y * inv_z ** 2], dim=-1),
    ], dim=-2)
    M = J @ W
    cov2d = M @ gaussians.cov @ M.transpose(-1, -2)
    cov2d = cov2d + LOW_PASS * torch.eye(2, dtype=dtype)

    mean2d = torch.stack([cam.fx * x * inv_z + cam.cx, cam.fy * y * inv_z + cam.cy], dim=-1)

    a, b, c = cov2d[:, 0, 0], cov2d[:, 0, 1], cov2d[:, 1, 1]
    det = a * c - b * b
    conic = torch.stack([c / det, -b / det, a / det], dim=-1)

    with torch.no_grad():
        mid = 0.5 * (a + c)
        lambda_max = mid + torch.sqrt(torch.clamp(mid * mid - det, min=0.0))
        radius = torch.sqrt(lambda_max) * support_sigmas(gaussians.opacity) + EXTENT_MARGIN
        u, v = mean2d[:, 0], mean2d[:, 1]
        on_screen = (
            (u + radius >= 0.5) & (u - radius <= cam.width - 0.5)
            & (v + radius >= 0.5) & (v - radius <= cam.height - 0.5)
        )
        visible = in_front & on_screen & (gaussians.opacity >= MIN_ALPHA)
        radius = torch.where(visible, radius, torch.zeros_like(radius))

    return ProjectedBatch(
        mean2d=mean2d,
        cov2d=cov2d,
        conic=conic,
        depth=z,
        radius=radius,
        visible=visible,
    )


def project_gaussian(g: GaussianWorld, cam: Camera) -> Optional[Projected2D]:
    """Projection of one Gaussian, None when culled"""
    return project_gaussians(GaussianBatch.from_gaussians([g]), cam).projected(0)


def as_gaussian_batch(splats: Union[GaussianBatch, List[GaussianWorld]]) -> GaussianBatch:
    if isinstance(splats, GaussianBatch):
        return splats
    if not splats:
        empty = torch.zeros((0, 3), dtype=torch.float64)
        return GaussianBatch(
            mean=empty, cov=torch.zeros((0, 3, 3), dtype=torch.float64),
            opacity=torch.zeros(0, dtype=torch.float64), color=empty.clone(),
        )
    return GaussianBatch.from_gaussians(splats)


def tile_range(lo: torch.Tensor, hi: torch.Tensor, tile: int, count: int):
    """First and one-past-last tile index covering [lo, hi] pixel coordinates"""
    first = torch.clamp(torch.floor(lo / tile), 0, count - 1).long()
    last = torch.clamp(torch.floor(hi / tile), 0, count - 1).long() + 1
    return first, last
