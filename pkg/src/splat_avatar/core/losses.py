# splat_avatar/core/losses.py
"""
Image losses, metrics, splat regularizers and the training objective
"""

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import torch
import torch.nn.functional as F

from ..exceptions import ShapeMismatch, TooSmall
from ..models.geometry_model import RiggedSplat, SplatSet
from ..models.image_model import ImageBuffer
from ..models.training_model import LossWeights
from ..utils.logging_utils import logger

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2
PSNR_CAP = 100.0

Image = Union[ImageBuffer, torch.Tensor]
PerceptualFn = Callable[[torch.Tensor, torch.Tensor], torch.Tensor]


class PerceptualRegistry:
    """Holds the optional perceptual-distance backend used by the third image-loss term"""

    def __init__(self):
        self.backend: Optional[PerceptualFn] = None
        self._warned = False

    def register(self, fn: PerceptualFn):
        self.backend = fn
        self._warned = False

    def clear(self):
        self.backend = None
        self._warned = False

    def distance(self, a: torch.Tensor, b: torch.Tensor, weight: float) -> torch.Tensor:
        if self.backend is None:
            if weight > 0 and not self._warned:
                logger.warning("⚠️ No perceptual backend registered; lambda3 term contributes 0")
                self._warned = True
            return a.new_zeros(())
        return self.backend(a, b)


perceptual_registry = PerceptualRegistry()


def register_perceptual_backend(fn: PerceptualFn):
    perceptual_registry.register(fn)


def clear_perceptual_backend():
    perceptual_registry.clear()


def has_perceptual_backend() -> bool:
    return perceptual_registry.backend is not None


def _pair(a: Image, b: Image) -> Tuple[torch.Tensor, torch.Tensor]:
    a = a.data if isinstance(a, ImageBuffer) else a
    b = b.data if isinstance(b, ImageBuffer) else b
    if a.shape != b.shape:
        raise ShapeMismatch(f"image shapes differ: {tuple(a.shape)} vs {tuple(b.shape)}")
    return a, b.to(a.dtype)


def l1_loss(a: Image, b: Image) -> torch.Tensor:
    a, b = _pair(a, b)
    return (a - b).abs().mean()


def _gaussian_window(dtype: torch.dtype) -> torch.Tensor:
    coords = torch.arange(SSIM_WINDOW, dtype=dtype) - (SSIM_WINDOW - 1) / 2
    g = torch.exp(-(coords ** 2) / (2 * SSIM_SIGMA ** 2))
    g = g / g.sum()
    return torch.outer(g, g)


def _mean_ssim(a: Image, b: Image) -> torch.Tensor:
    """Mean local SSIM over the valid (unpadded) window positions, per channel then averaged; may be negative"""
    a, b = _pair(a, b)
    if a.shape[0] < SSIM_WINDOW or a.shape[1] < SSIM_WINDOW:
        raise TooSmall(f"SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {a.shape[1]}x{a.shape[0]}")

    channels = a.shape[2]
    window = _gaussian_window(a.dtype).expand(channels, 1, SSIM_WINDOW, SSIM_WINDOW)
    x = a.permute(2, 0, 1)[None]
    y = b.permute(2, 0, 1)[None]

    def blur(t):
        return F.conv2d(t, window, groups=channels)

    mu_x, mu_y = blur(x), blur(y)
    var_x = blur(x * x) - mu_x ** 2
    var_y = blur(y * y) - mu_y ** 2
    cov_xy = blur(x * y) - mu_x * mu_y

    ssim_map = ((2 * mu_x * mu_y + SSIM_C1) * (2 * cov_xy + SSIM_C2)) / (
        (mu_x ** 2 + mu_y ** 2 + SSIM_C1) * (var_x + var_y + SSIM_C2)
    )
    return ssim_map.mean(dim=(0, 2, 3)).mean()


def ssim(a: Image, b: Image) -> torch.Tensor:
    """Reported SSIM, floored at 0"""
    return _mean_ssim(a, b).clamp_min(0.0)


def psnr(a: Image, b: Image) -> float:
    """10 log10(1 / MSE) in dB; identical images give +inf"""
    a, b = _pair(a, b)
    mse = float(((a - b) ** 2).mean())
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def capped_psnr(value: float) -> float:
    return min(value, PSNR_CAP)


def image_loss(a: Image, b: Image, w: LossWeights) -> torch.Tensor:
    a, b = _pair(a, b)
    loss = w.lambda1 * l1_loss(a, b)
    if w.lambda2 > 0:
        loss = loss + w.lambda2 * (1.0 - _mean_ssim(a, b))
    if w.lambda3 > 0:
        loss = loss + w.lambda3 * perceptual_registry.distance(a, b, w.lambda3)
    return loss


def _thresholded_norm(x: torch.Tensor, eps: float) -> torch.Tensor:
    """Mean over rows of || max(|x|, eps) ||; components at or below eps pass no gradient"""
    if x.shape[0] == 0:
        return x.new_zeros(())
    floored = torch.where(x.abs() > eps, x.abs(), torch.full_like(x, eps))
    return floored.norm(dim=-1).mean()


def _local_tensor(splats: Union[SplatSet, Sequence[RiggedSplat], torch.Tensor], attr: str) -> torch.Tensor:
    if isinstance(splats, torch.Tensor):
        return splats
    if isinstance(splats, SplatSet):
        return splats.mu if attr == "mu" else splats.scale
    values = [getattr(s, "mu_local" if attr == "mu" else "scale_local") for s in splats]
    return torch.tensor(values, dtype=torch.float64).reshape(-1, 3)


def pos_regularizer(splats: Union[SplatSet, Sequence[RiggedSplat], torch.Tensor], eps_pos: float) -> torch.Tensor:
    return _thresholded_norm(_local_tensor(splats, "mu"), eps_pos)


def scale_regularizer(splats: Union[SplatSet, Sequence[RiggedSplat], torch.Tensor], eps_scale: float) -> torch.Tensor:
    return _thresholded_norm(_local_tensor(splats, "scale"), eps_scale)


@dataclass
class LossResult:
    """Scalar objective, its breakdown and the gradient w.r.t. every supervised render"""
    total: torch.Tensor
    breakdown: Dict[str, float]
    rec_grad: torch.Tensor
    view_grads: List[torch.Tensor] = field(default_factory=list)

    @property
    def image_grads(self) -> List[torch.Tensor]:
        return [self.rec_grad] + self.view_grads


def total_loss(
    rec_pair: Tuple[Image, Image],
    view_pairs: Sequence[Tuple[Image, Image]],
    splats: Union[SplatSet, Sequence[RiggedSplat]],
    w: LossWeights,
    sds_views: bool = False,
) -> LossResult:
    """
    Input-view image loss + mean view loss over the sampled views + weighted regularizers

    Renders enter as detached leaves so the per-image gradients can be handed to the
    render backward; `total` stays attached to the regularizer parameters. With
    `sds_views` each view target is a gradient image g and the view term is <g, render>.
    """
    rec, rec_target = _pair(*rec_pair)
    rec_leaf = rec.detach().requires_grad_(True)
    rec_term = image_loss(rec_leaf, rec_target.detach(), w)

    view_leaves = []
    view_term = rec_leaf.new_zeros(())
    for render, target in view_pairs:
        render, target = _pair(render, target)
        leaf = render.detach().requires_grad_(True)
        view_leaves.append(leaf)
        if sds_views:
            view_term = view_term + (target.detach() * leaf).sum()
        else:
            view_term = view_term + image_loss(leaf, target.detach(), w)
    if view_leaves:
        view_term = view_term / len(view_leaves)

    pos_term = w.lambda_pos * pos_regularizer(splats, w.eps_pos)
    scale_term = w.lambda_scale * scale_regularizer(splats, w.eps_scale)
    image_terms = rec_term + view_term
    grads = torch.autograd.grad(image_terms, [rec_leaf] + view_leaves, allow_unused=True)
    grads = [torch.zeros_like(leaf) if g is None else g for leaf, g in zip([rec_leaf] + view_leaves, grads)]

    total = image_terms.detach() + pos_term + scale_term
    return LossResult(
        total=total,
        breakdown={
            "rec": float(rec_term),
            "view": float(view_term),
            "pos": float(pos_term),
            "scale": float(scale_term),
            "total": float(total),
        },
        rec_grad=grads[0],
        view_grads=list(grads[1:]),
    )
