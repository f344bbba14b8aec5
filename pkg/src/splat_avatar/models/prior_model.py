# splat_avatar/models/prior_model.py
"""
Prior core models - latents and the discrete noise schedule
"""

import math
from dataclasses import dataclass
from typing import List

import torch

from ..exceptions import IndexOutOfRange


@dataclass
class Latent:
    """C x h x w latent, unbounded range"""
    data: torch.Tensor

    def __post_init__(self):
        if self.data.dim() != 3:
            raise ValueError(f"latent must be C x h x w, got {tuple(self.data.shape)}")
        if not torch.isfinite(self.data).all():
            raise ValueError("latent contains non-finite values")

    @property
    def c(self) -> int:
        return self.data.shape[0]

    @property
    def h(self) -> int:
        return self.data.shape[1]

    @property
    def w(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self):
        return tuple(self.data.shape)

    @classmethod
    def scalar(cls, value: float) -> "Latent":
        return cls(torch.full((1, 1, 1), float(value), dtype=torch.float64))


@dataclass(frozen=True)
class DdimSchedule:
    """Cumulative signal fractions of a T-step diffusion process"""
    alpha_bar: torch.Tensor  # (T,) float64, strictly decreasing

    @property
    def T(self) -> int:
        return self.alpha_bar.shape[0]

    @classmethod
    def scaled_linear(
        cls,
        num_train_timesteps: int = 1000,
        beta_start: float = 0.00085,
        beta_end: float = 0.012,
    ) -> "DdimSchedule":
        betas = torch.linspace(
            math.sqrt(beta_start), math.sqrt(beta_end), num_train_timesteps, dtype=torch.float64
        ) ** 2
        return cls(torch.cumprod(1.0 - betas, dim=0))

    def index_of(self, t: float) -> int:
        """Continuous t in [0, 1] to a step index"""
        if not 0.0 <= t <= 1.0:
            raise IndexOutOfRange(f"t={t} outside [0, 1]")
        return int(round(t * (self.T - 1)))

    def check_index(self, index: int) -> int:
        if not 0 <= index < self.T:
            raise IndexOutOfRange(f"step index {index} outside [0, {self.T - 1}]")
        return index

    def alpha_bar_at(self, index: int) -> float:
        """Index 0 is the clean sample (alpha_bar = 1)"""
        self.check_index(index)
        if index == 0:
            return 1.0
        return float(self.alpha_bar[index])

    def ddim_timesteps(self, start_index: int, stride: int) -> List[int]:
        """ceil(start / stride) evenly spaced steps from start_index down to 0"""
        self.check_index(start_index)
        steps = math.ceil(start_index / stride)
        if steps == 0:
            return [0]
        return [(start_index * (steps - i)) // steps for i in range(steps + 1)]
