# splat_avatar/services/prior_service.py
"""
Prior service - pseudo ground truths from renders and the shipped view-prior oracles
"""

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Protocol, Sequence, Tuple

import numpy as np
import torch

from ..core.codec import decode_tensor, downsample_image, encode_tensor, resize_image, upsample_latent
from ..core.ddim import add_noise_at, ddim_sample
from ..core.denoiser import ToyDenoiser, blend_attractor
from ..exceptions import BadDimensions, MissingGroundTruth
from ..models.prior_model import DdimSchedule, Latent
from ..models.training_model import PriorConfig, ViewSupervision

# Renders are pooled by this factor before encoding; the upsampler restores it
PRIOR_POOL = 2
RENDER_MULTIPLE = 16


def view_generator(seed: int, iteration: int, view: int) -> torch.Generator:
    """RNG substream owned by one (seed, iteration, view) oracle call"""
    state = np.random.SeedSequence([seed, iteration, view]).generate_state(2, dtype=np.uint32)
    return torch.Generator().manual_seed(int(state[0]) << 32 | int(state[1]))


def _check_render(render: torch.Tensor):
    h, w = render.shape[0], render.shape[1]
    if h % RENDER_MULTIPLE or w % RENDER_MULTIPLE:
        raise BadDimensions(f"render {w}x{h} must be divisible by {RENDER_MULTIPLE}")


def _prior_latent(image: torch.Tensor) -> torch.Tensor:
    return encode_tensor(downsample_image(image, PRIOR_POOL))


def _sample_index(sched: DdimSchedule, config: PriorConfig, generator: torch.Generator, force: bool = False) -> int:
    if not (config.three_d_aware or force):
        return 0
    u = float(torch.rand((), generator=generator, dtype=torch.float64))
    return sched.index_of(config.t_min + (config.t_max - config.t_min) * u)


def denoise_view(
    render: torch.Tensor,
    attractor: Latent,
    sched: DdimSchedule,
    config: PriorConfig,
    generator: torch.Generator,
) -> torch.Tensor:
    """encode -> noise -> strided DDIM -> (upsample) -> decode, back at render resolution"""
    _check_render(render)
    height, width = render.shape[0], render.shape[1]
    z0 = Latent(_prior_latent(render.detach()))
    index = _sample_index(sched, config, generator)
    eps = Latent(torch.randn(z0.shape, generator=generator, dtype=z0.data.dtype))
    z_t = add_noise_at(z0, eps, index, sched)
    z_clean = ddim_sample(z_t, index, ToyDenoiser(attractor, sched), sched, stride=config.ddim_stride)
    if config.upsampler:
        return decode_tensor(upsample_latent(z_clean, config.upsampler_backend).data)
    return resize_image(decode_tensor(z_clean.data), (height, width)).clamp(0.0, 1.0)


def latent_grad_to_image(grad: torch.Tensor, size: Tuple[int, int]) -> torch.Tensor:
    """
    Carry a (C, h, w) latent-space gradient to an (H, W, C) image gradient

    The decoder's bilinear upsampling spreads each latent cell over its pixels, then the
    result is resized to the render; dividing by the pixels per cell keeps a constant latent
    gradient at the same per-pixel size as the average-pooling encoder's chain rule.
    """
    height, width = size
    cell = (height * width) / (grad.shape[-2] * grad.shape[-1])
    return resize_image(decode_tensor(grad, clamp=False), (height, width)) / cell


def sds_gradient(
    render: torch.Tensor,
    attractor: Latent,
    sched: DdimSchedule,
    config: PriorConfig,
    generator: torch.Generator,
) -> torch.Tensor:
    """Single-step score-distillation gradient w (eps_hat - eps), routed to image space through the decoder"""
    _check_render(render)
    z0 = Latent(_prior_latent(render.detach()))
    index = max(1, _sample_index(sched, config, generator, force=True))
    eps = torch.randn(z0.shape, generator=generator, dtype=z0.data.dtype)
    ab = sched.alpha_bar_at(index)
    z_t = add_noise_at(z0, Latent(eps), index, sched)
    eps_hat = ToyDenoiser(attractor, sched)(z_t, index).data
    grad = torch.nan_to_num((1.0 - ab) * (eps_hat - eps))
    return latent_grad_to_image(grad, (render.shape[0], render.shape[1]))


def pseudo_gt(
    renders: Sequence[torch.Tensor],
    cond_image: torch.Tensor,
    normals: Sequence[torch.Tensor],
    sched: DdimSchedule,
    config: PriorConfig,
    generators: Sequence[torch.Generator],
    attractors: Optional[Sequence[Latent]] = None,
) -> List[torch.Tensor]:
    """
    Pseudo ground truth (or SDS gradient image in sds_mode) for every render

    Without explicit attractors the denoiser is pulled toward gamma * input frame +
    (1 - gamma) * render. Normal maps are part of the oracle contract; the toy denoiser
    does not condition on them.
    """
    if len(renders) != len(normals) or len(renders) != len(generators):
        raise BadDimensions(
            f"{len(renders)} renders, {len(normals)} normal maps, {len(generators)} rng streams"
        )
    outputs = []
    for i, render in enumerate(renders):
        if attractors is not None:
            attractor = attractors[i]
        else:
            cond = resize_image(cond_image.detach().to(render.dtype), tuple(render.shape[:2]))
            attractor = blend_attractor(
                Latent(_prior_latent(cond)), Latent(_prior_latent(render.detach())), config.gamma
            )
        step = sds_gradient if config.sds_mode else denoise_view
        outputs.append(step(render, attractor, sched, config, generators[i]))
    return outputs


@dataclass
class OracleRequest:
    """Everything an oracle may look at for one training iteration"""
    cond_image: torch.Tensor
    renders: List[torch.Tensor]
    normals: List[torch.Tensor]
    cameras: List[str]
    timestep: int
    generators: List[torch.Generator] = field(default_factory=list)


class ViewPriorOracle(Protocol):
    """Maps (input frame, normal maps, renders, rng) to one target image per render"""

    produces_gradients: bool

    def __call__(self, request: OracleRequest) -> List[torch.Tensor]:
        ...


GroundTruthLookup = Callable[[str, int], Optional[torch.Tensor]]


def dict_lookup(images: Dict[Tuple[str, int], torch.Tensor]) -> GroundTruthLookup:
    return lambda camera, timestep: images.get((camera, timestep))


class GroundTruthOracle:
    """Returns the held-out ground-truth images verbatim"""

    produces_gradients = False

    def __init__(self, lookup: GroundTruthLookup):
        self.lookup = lookup

    def target(self, camera: str, timestep: int) -> torch.Tensor:
        image = self.lookup(camera, timestep)
        if image is None:
            raise MissingGroundTruth(f"no ground truth for camera '{camera}' at timestep {timestep}")
        return image

    def __call__(self, request: OracleRequest) -> List[torch.Tensor]:
        return [self.target(cam, request.timestep) for cam in request.cameras]


class DiffusionLikeOracle:
    """Noise -> DDIM -> upsample -> decode chain with the toy denoiser attracted toward ground truth"""

    def __init__(self, lookup: GroundTruthLookup, config: PriorConfig, sched: Optional[DdimSchedule] = None):
        self.ground_truth = GroundTruthOracle(lookup)
        self.config = config
        self.sched = sched or DdimSchedule.scaled_linear(
            config.num_train_timesteps, config.beta_start, config.beta_end
        )

    @property
    def produces_gradients(self) -> bool:
        return self.config.sds_mode

    def __call__(self, request: OracleRequest) -> List[torch.Tensor]:
        attractors: List[Latent] = []
        for cam, render in zip(request.cameras, request.renders):
            target = self.ground_truth.target(cam, request.timestep).to(render.dtype)
            attractors.append(blend_attractor(
                Latent(_prior_latent(target)), Latent(_prior_latent(render.detach())), self.config.gamma
            ))
        return pseudo_gt(
            request.renders, request.cond_image, request.normals,
            self.sched, self.config, request.generators, attractors,
        )


def build_oracle(config: PriorConfig, lookup: GroundTruthLookup) -> Optional[ViewPriorOracle]:
    """Oracle selected by `view_supervision`; None when supervision is off"""
    if config.view_supervision == ViewSupervision.GROUND_TRUTH:
        return GroundTruthOracle(lookup)
    if config.view_supervision == ViewSupervision.DIFFUSION_LIKE:
        return DiffusionLikeOracle(lookup, config)
    return None
