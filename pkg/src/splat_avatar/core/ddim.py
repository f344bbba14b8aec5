# splat_avatar/core/ddim.py
"""
Deterministic DDIM sampling on a discrete noise schedule
"""

import math
from typing import Callable, Optional

from ..exceptions import IndexOutOfRange, ShapeMismatch
from ..models.prior_model import DdimSchedule, Latent

NoisePredictor = Callable[[Latent, int], Latent]


def _check_shapes(*latents: Latent):
    shapes = {lat.shape for lat in latents}
    if len(shapes) > 1:
        raise ShapeMismatch(f"latent shapes differ: {sorted(shapes)}")


def add_noise(z0: Latent, eps: Latent, t: float, sched: DdimSchedule) -> Latent:
    """z_t = sqrt(ab) z0 + sqrt(1 - ab) eps at index round(t (T - 1))"""
    return add_noise_at(z0, eps, sched.index_of(t), sched)


def add_noise_at(z0: Latent, eps: Latent, index: int, sched: DdimSchedule) -> Latent:
    _check_shapes(z0, eps)
    ab = sched.alpha_bar_at(index)
    return Latent(math.sqrt(ab) * z0.data + math.sqrt(1.0 - ab) * eps.data)


def ddim_step(z_t: Latent, eps_hat: Latent, t: int, t_prev: int, sched: DdimSchedule) -> Latent:
    """eta = 0 update from step index t to t_prev; index 0 is the clean sample"""
    _check_shapes(z_t, eps_hat)
    sched.check_index(t)
    sched.check_index(t_prev)
    if t_prev > t:
        raise IndexOutOfRange(f"t_prev ({t_prev}) must not exceed t ({t})")
    if t_prev == t:
        return Latent(z_t.data.clone())

    ab_t = sched.alpha_bar_at(t)
    ab_prev = sched.alpha_bar_at(t_prev)
    z0_hat = (z_t.data - math.sqrt(1.0 - ab_t) * eps_hat.data) / math.sqrt(ab_t)
    return Latent(math.sqrt(ab_prev) * z0_hat + math.sqrt(1.0 - ab_prev) * eps_hat.data)


def ddim_sample(
    z_t: Latent,
    start_index: int,
    predict_noise: NoisePredictor,
    sched: DdimSchedule,
    stride: int = 20,
    steps: Optional[list] = None,
) -> Latent:
    """Run the strided chain from start_index down to the clean latent"""
    steps = steps if steps is not None else sched.ddim_timesteps(start_index, stride)
    z = z_t
    for t, t_prev in zip(steps[:-1], steps[1:]):
        z = ddim_step(z, predict_noise(z, t), t, t_prev, sched)
    return z
