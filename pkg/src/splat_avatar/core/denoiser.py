# splat_avatar/core/denoiser.py
"""
Toy analytic denoiser: the exact noise predictor of a point mass
"""

import math
from dataclasses import dataclass

from ..exceptions import IndexOutOfRange, ShapeMismatch
from ..models.prior_model import DdimSchedule, Latent


@dataclass(frozen=True)
class DenoiserContext:
    attractor: Latent
    schedule: DdimSchedule


def blend_attractor(target: Latent, render: Latent, gamma: float) -> Latent:
    """gamma toward the target latent, 1 - gamma toward the current render"""
    if target.shape != render.shape:
        raise ShapeMismatch(f"attractor latents differ: {target.shape} vs {render.shape}")
    return Latent(gamma * target.data + (1.0 - gamma) * render.data)


def toy_denoiser(z_t: Latent, t: int, context: DenoiserContext) -> Latent:
    """eps_hat = (z_t - sqrt(ab_t) m) / sqrt(1 - ab_t)"""
    if t == 0:
        raise IndexOutOfRange("toy denoiser is undefined at the clean index 0")
    if z_t.shape != context.attractor.shape:
        raise ShapeMismatch(f"latent {z_t.shape} vs attractor {context.attractor.shape}")
    ab = context.schedule.alpha_bar_at(t)
    return Latent((z_t.data - math.sqrt(ab) * context.attractor.data) / math.sqrt(1.0 - ab))


class ToyDenoiser:
    """Callable (z_t, t) -> eps_hat bound to one attractor"""

    def __init__(self, attractor: Latent, schedule: DdimSchedule):
        self.context = DenoiserContext(attractor, schedule)

    def __call__(self, z_t: Latent, t: int) -> Latent:
        return toy_denoiser(z_t, t, self.context)
