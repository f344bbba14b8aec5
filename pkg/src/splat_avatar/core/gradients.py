# splat_avatar/core/gradients.py
"""
Render backward - image-space gradients to local splat parameters, and densification statistics
"""

from dataclasses import replace
from typing import List, Optional, Union

import torch

from ..exceptions import IndexMismatch, ShapeMismatch
from ..models.geometry_model import Camera, FrameBatch, RiggedSplat, SplatSet, TriangleFrame
from ..models.image_model import DensifyStats, ImageBuffer, RenderOutput, SplatGradients
from .rasterizer import render_splats

GRAD_FIELDS = ("mu", "rot", "log_scale", "opacity_logit", "color", "sh_rest")


def _as_splat_set(splats: Union[SplatSet, List[RiggedSplat]]) -> SplatSet:
    return splats if isinstance(splats, SplatSet) else SplatSet.from_splats(splats)


def _as_frame_batch(frames: Union[FrameBatch, List[TriangleFrame]]) -> FrameBatch:
    return frames if isinstance(frames, FrameBatch) else FrameBatch.from_frames(frames)


def _as_gradient_tensor(image: Union[ImageBuffer, torch.Tensor, None], name: str) -> Optional[torch.Tensor]:
    if isinstance(image, ImageBuffer):
        if not image.signed:
            # A clamped buffer has already lost every negative entry
            raise TypeError(f"{name} must be a signed buffer (ImageBuffer.gradient) or a tensor")
        return image.data
    return image


def screen_grad_norm(output: RenderOutput) -> torch.Tensor:
    """Norm of the 2D mean gradient in NDC units, zero for splats the view did not see"""
    grad = output.mean2d.grad
    if grad is None:
        return torch.zeros(output.mean2d.shape[0], dtype=output.mean2d.dtype)
    ndc = grad * grad.new_tensor([0.5 * output.width, 0.5 * output.height])
    return torch.where(output.visible, ndc.norm(dim=-1), torch.zeros_like(ndc[:, 0]))


def collect_gradients(params: SplatSet, output: RenderOutput) -> SplatGradients:
    """Read .grad of every parameter leaf after a backward pass"""
    grads = {}
    for name in GRAD_FIELDS:
        tensor = getattr(params, name)
        grads[name] = tensor.grad.detach().clone() if tensor.grad is not None else torch.zeros_like(tensor)
    return SplatGradients(
        screen_grad_norm=screen_grad_norm(output),
        visible=output.visible.clone(),
        **grads,
    )


def backward_from_render(
    loss: torch.Tensor, params: SplatSet, output: RenderOutput
) -> SplatGradients:
    """Backpropagate a loss built from a differentiable render and collect the gradients"""
    if loss.requires_grad:
        loss.backward()
    return collect_gradients(params, output)


def render_backward(
    splats: Union[SplatSet, List[RiggedSplat]],
    frames: Union[FrameBatch, List[TriangleFrame]],
    cam: Camera,
    dL_dimage: Union[ImageBuffer, torch.Tensor],
    dL_dalpha: Union[ImageBuffer, torch.Tensor, None] = None,
    workers: Optional[int] = None,
) -> SplatGradients:
    """Gradients of <dL_dimage, render> (+ <dL_dalpha, alpha>) w.r.t. the local splat parameters"""
    grad_color = _as_gradient_tensor(dL_dimage, "dL/dimage")
    grad_alpha = _as_gradient_tensor(dL_dalpha, "dL/dalpha")
    if tuple(grad_color.shape) != (cam.height, cam.width, 3):
        raise ShapeMismatch(
            f"dL/dimage has shape {tuple(grad_color.shape)}, camera renders {(cam.height, cam.width, 3)}"
        )
    if grad_alpha is not None and tuple(grad_alpha.shape) != (cam.height, cam.width, 1):
        raise ShapeMismatch(
            f"dL/dalpha has shape {tuple(grad_alpha.shape)}, camera renders {(cam.height, cam.width, 1)}"
        )

    base = _as_splat_set(splats)
    params = base.map(lambda t: t.detach().clone().requires_grad_(t.is_floating_point()))
    output = render_splats(params, _as_frame_batch(frames), cam, workers=workers)

    targets, grads = [output.color], [grad_color.to(output.color.dtype)]
    if grad_alpha is not None:
        targets.append(output.alpha)
        grads.append(grad_alpha.to(output.alpha.dtype))
    if output.color.requires_grad:
        torch.autograd.backward(targets, grads)
    return collect_gradients(params, output)


def accumulate_densify_stats(grads: SplatGradients, stats: DensifyStats) -> DensifyStats:
    """Add one view's screen-gradient norms to the running per-splat mean"""
    if len(grads) != len(stats):
        raise IndexMismatch(
            f"gradients cover {len(grads)} splats, accumulator {len(stats)}; reset after densification"
        )
    seen = grads.visible.to(stats.grad_sum.dtype)
    return replace(
        stats,
        grad_sum=stats.grad_sum + grads.screen_grad_norm.to(stats.grad_sum.dtype) * seen,
        count=stats.count + seen,
        pos_grad_sum=stats.pos_grad_sum + grads.mu.to(stats.grad_sum.dtype),
        updates=stats.updates + 1,
    )
