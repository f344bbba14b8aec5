# splat_avatar/core/codec.py
"""
Stub latent codec and latent upsampler backends
"""

from typing import Callable, Dict, Tuple, Union

import torch
import torch.nn.functional as F

from ..exceptions import BackendUnavailable, BadDimensions
from ..models.image_model import ImageBuffer
from ..models.prior_model import Latent

CODEC_FACTOR = 8

UpsamplerFn = Callable[[torch.Tensor], torch.Tensor]


def encode_tensor(image: torch.Tensor) -> torch.Tensor:
    """(H, W, C) image to (C, H/8, W/8) latent by 8x8 average pooling; differentiable"""
    h, w = image.shape[0], image.shape[1]
    if h % CODEC_FACTOR or w % CODEC_FACTOR:
        raise BadDimensions(f"image {w}x{h} is not divisible by {CODEC_FACTOR}")
    return F.avg_pool2d(image.permute(2, 0, 1)[None], CODEC_FACTOR)[0]


def decode_tensor(latent: torch.Tensor, clamp: bool = True) -> torch.Tensor:
    """(C, h, w) latent to (8h, 8w, C) image by bilinear upsampling, clamped to [0, 1] unless asked not to"""
    up = F.interpolate(latent[None], scale_factor=CODEC_FACTOR, mode="bilinear", align_corners=False)[0]
    if clamp:
        up = up.clamp(0.0, 1.0)
    return up.permute(1, 2, 0)


def codec_encode(img: Union[ImageBuffer, torch.Tensor]) -> Latent:
    data = img.data if isinstance(img, ImageBuffer) else img
    return Latent(encode_tensor(data))


def codec_decode(z: Latent) -> ImageBuffer:
    return ImageBuffer(decode_tensor(z.data))


def _bilinear_x2(latent: torch.Tensor) -> torch.Tensor:
    # align_corners keeps affine signals exactly affine
    h, w = latent.shape[-2:]
    return F.interpolate(latent[None], size=(2 * h, 2 * w), mode="bilinear", align_corners=True)[0]


_UPSAMPLER_BACKENDS: Dict[str, UpsamplerFn] = {"bilinear": _bilinear_x2}


def register_upsampler_backend(name: str, fn: UpsamplerFn):
    _UPSAMPLER_BACKENDS[name] = fn


def available_upsamplers() -> list:
    return sorted(_UPSAMPLER_BACKENDS)


def upsample_latent(z: Latent, mode: str = "bilinear") -> Latent:
    """Double the latent resolution with a registered backend"""
    if mode not in _UPSAMPLER_BACKENDS:
        raise BackendUnavailable(f"upsampler backend '{mode}' is not registered (have {available_upsamplers()})")
    out = _UPSAMPLER_BACKENDS[mode](z.data)
    if out.shape != (z.c, 2 * z.h, 2 * z.w):
        raise BadDimensions(f"upsampler '{mode}' returned {tuple(out.shape)}, expected {(z.c, 2 * z.h, 2 * z.w)}")
    return Latent(out)


def downsample_image(image: torch.Tensor, factor: int) -> torch.Tensor:
    """(H, W, C) average pooling by an integer factor"""
    if factor == 1:
        return image
    return F.avg_pool2d(image.permute(2, 0, 1)[None], factor)[0].permute(1, 2, 0)


def resize_image(image: torch.Tensor, size: Tuple[int, int]) -> torch.Tensor:
    """(H, W, C) bilinear resize to (height, width)"""
    if tuple(image.shape[:2]) == tuple(size):
        return image
    out = F.interpolate(image.permute(2, 0, 1)[None], size=size, mode="bilinear", align_corners=False)[0]
    return out.permute(1, 2, 0)
