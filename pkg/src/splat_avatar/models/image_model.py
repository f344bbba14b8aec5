# splat_avatar/models/image_model.py
"""
Image and render models - image buffers, projected splats, render outputs and gradients
"""

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
import torch
from pydantic import BaseModel, ConfigDict, Field, field_validator

VALID_CHANNELS = (1, 3, 4)


@dataclass
class ImageBuffer:
    """
    H x W x C float image in [0, 1]

    A signed buffer skips the clamp; it carries image-space gradients, see ImageBuffer.gradient.
    """
    data: torch.Tensor
    signed: bool = False

    def __post_init__(self):
        if self.data.dim() == 2:
            self.data = self.data[..., None]
        if self.data.dim() != 3 or self.data.shape[-1] not in VALID_CHANNELS:
            raise ValueError(f"image must be H x W x C with C in {VALID_CHANNELS}, got {tuple(self.data.shape)}")
        if not torch.isfinite(self.data).all():
            raise ValueError("image contains non-finite values")
        if not self.signed:
            self.data = self.data.clamp(0.0, 1.0)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> Tuple[int, int, int]:
        return tuple(self.data.shape)

    @classmethod
    def gradient(cls, data: torch.Tensor) -> "ImageBuffer":
        return cls(data, signed=True)

    @classmethod
    def zeros(cls, height: int, width: int, channels: int = 3, dtype: torch.dtype = torch.float64) -> "ImageBuffer":
        return cls(torch.zeros((height, width, channels), dtype=dtype))

    def to_uint8(self) -> np.ndarray:
        return np.round(self.data.detach().cpu().numpy() * 255.0).astype(np.uint8)

    @classmethod
    def from_uint8(cls, array: np.ndarray, dtype: torch.dtype = torch.float64) -> "ImageBuffer":
        if array.ndim == 2:
            array = array[..., None]
        return cls(torch.from_numpy(array.astype(np.float64) / 255.0).to(dtype))


class Projected2D(BaseModel):
    """One splat after EWA projection"""
    model_config = ConfigDict(frozen=True)

    mean2d: Tuple[float, float]
    cov2d: Tuple[Tuple[float, float], Tuple[float, float]]
    depth: float = Field(gt=0.01)
    index: int = Field(ge=0)

    @field_validator("cov2d")
    @classmethod
    def _symmetric_positive(cls, value):
        (a, b), (b2, c) = value
        if abs(b - b2) > 1e-9:
            raise ValueError("cov2d must be symmetric")
        if a <= 0.0 or a * c - b * b <= 0.0:
            raise ValueError("cov2d must be positive definite")
        return value


@dataclass
class ProjectedBatch:
    """Projection of every splat of a batch; culled rows have visible == False"""
    mean2d: torch.Tensor   # (N, 2) pixels
    cov2d: torch.Tensor    # (N, 2, 2) pixels^2, dilated
    conic: torch.Tensor    # (N, 3) upper triangle of the inverse cov2d: a, b, c
    depth: torch.Tensor    # (N,) camera-space z
    radius: torch.Tensor   # (N,) binning radius in pixels
    visible: torch.Tensor  # (N,) bool

    def __len__(self) -> int:
        return self.mean2d.shape[0]

    def projected(self, i: int) -> Optional[Projected2D]:
        if not bool(self.visible[i]):
            return None
        return Projected2D(
            mean2d=tuple(self.mean2d[i].tolist()),
            cov2d=tuple(tuple(row) for row in self.cov2d[i].tolist()),
            depth=float(self.depth[i]),
            index=i,
        )


@dataclass
class RenderOutput:
    """Rendered color, accumulated alpha and the per-splat handles the gradient pass needs"""
    color: torch.Tensor   # (H, W, 3)
    alpha: torch.Tensor   # (H, W, 1)
    mean2d: torch.Tensor  # (N, 2) screen means; retains grad for densification statistics
    radius: torch.Tensor  # (N,)
    visible: torch.Tensor  # (N,) bool

    @property
    def height(self) -> int:
        return self.color.shape[0]

    @property
    def width(self) -> int:
        return self.color.shape[1]

    def color_image(self) -> ImageBuffer:
        return ImageBuffer(self.color.detach())

    def alpha_image(self) -> ImageBuffer:
        return ImageBuffer(self.alpha.detach())


@dataclass
class SplatGradients:
    """Gradients of a scalar loss w.r.t. every optimizable splat field"""
    mu: torch.Tensor
    rot: torch.Tensor
    log_scale: torch.Tensor
    opacity_logit: torch.Tensor
    color: torch.Tensor
    screen_grad_norm: torch.Tensor  # (N,) NDC-scaled norm of the 2D mean gradient
    sh_rest: Optional[torch.Tensor] = None
    visible: Optional[torch.Tensor] = None

    def __post_init__(self):
        if self.visible is None:
            self.visible = torch.ones(self.mu.shape[0], dtype=torch.bool)

    def __len__(self) -> int:
        return self.mu.shape[0]


@dataclass
class DensifyStats:
    """Running per-splat accumulator of screen-space gradient norms"""
    grad_sum: torch.Tensor      # (N,)
    count: torch.Tensor         # (N,)
    pos_grad_sum: torch.Tensor  # (N, 3) local position gradient, sets the clone direction
    updates: int = 0

    @classmethod
    def zeros(cls, n: int, dtype: torch.dtype = torch.float64) -> "DensifyStats":
        return cls(
            grad_sum=torch.zeros(n, dtype=dtype),
            count=torch.zeros(n, dtype=dtype),
            pos_grad_sum=torch.zeros((n, 3), dtype=dtype),
        )

    def __len__(self) -> int:
        return self.grad_sum.shape[0]

    def mean(self) -> torch.Tensor:
        return torch.where(self.count > 0, self.grad_sum / self.count.clamp_min(1.0), torch.zeros_like(self.grad_sum))

    def reset(self, n: Optional[int] = None) -> "DensifyStats":
        return DensifyStats.zeros(len(self) if n is None else n, dtype=self.grad_sum.dtype)
