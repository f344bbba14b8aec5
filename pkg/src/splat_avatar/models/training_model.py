# splat_avatar/models/training_model.py
"""
Training core models - optimisation settings, loss weights, prior flags and per-run records
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional

import torch
from pydantic import BaseModel, Field, model_validator

from .geometry_model import SplatSet


# Core Enums
class ViewSupervision(str, Enum):
    OFF = "off"
    GROUND_TRUTH = "ground_truth"
    DIFFUSION_LIKE = "diffusion_like"


class UpsamplerBackend(str, Enum):
    BILINEAR = "bilinear"


# Core Models
class LossWeights(BaseModel):
    """Weights and thresholds of the training objective"""
    lambda1: float = Field(default=0.8, ge=0.0)
    lambda2: float = Field(default=0.2, ge=0.0)
    # perceptual slot; contributes only when a backend is registered
    lambda3: float = Field(default=0.1, ge=0.0)
    lambda_pos: float = Field(default=0.01, ge=0.0)
    lambda_scale: float = Field(default=1.0, ge=0.0)
    eps_pos: float = Field(default=1.0, gt=0.0)
    eps_scale: float = Field(default=0.6, gt=0.0)

    def loss_weights(self) -> "LossWeights":
        return LossWeights(**{name: getattr(self, name) for name in LossWeights.model_fields})


class OptimConfig(BaseModel):
    """Per-group learning rates, schedule and densification settings"""
    lr_position: float = Field(default=5e-5, gt=0.0)
    lr_scale: float = Field(default=1.7e-2, gt=0.0)
    lr_rotation: float = Field(default=1e-3, gt=0.0)
    lr_color: float = Field(default=2.5e-3, gt=0.0)
    lr_opacity: float = Field(default=5e-2, gt=0.0)
    iterations: int = Field(default=6000, ge=1)
    densify_grad_threshold: float = Field(default=2e-4, gt=0.0)
    densify_interval: int = Field(default=300, ge=1)
    densify_until: int = Field(default=5000, ge=0)
    prune_opacity: float = Field(default=0.005, ge=0.0, lt=1.0)
    clone_scale_threshold: float = Field(default=0.01, gt=0.0)
    split_factor: float = Field(default=1.6, gt=1.0)
    max_splats: int = Field(default=200_000, ge=1)
    views_per_iter: int = Field(default=4, ge=1)
    init_scale: float = Field(default=0.3, gt=0.0)
    sh_degree: int = Field(default=0, ge=0, le=3)
    seed: int = 0

    @model_validator(mode="after")
    def _check_schedule(self) -> "OptimConfig":
        if self.densify_until > self.iterations:
            raise ValueError(
                f"densify_until ({self.densify_until}) exceeds iterations ({self.iterations})"
            )
        return self


class PriorConfig(BaseModel):
    """View-prior oracle selection and the ablation switches"""
    view_supervision: ViewSupervision = ViewSupervision.DIFFUSION_LIKE
    sds_mode: bool = False
    upsampler: bool = True
    upsampler_backend: str = UpsamplerBackend.BILINEAR.value
    three_d_aware: bool = True
    gamma: float = Field(default=0.8, ge=0.0, le=1.0)
    ddim_stride: int = Field(default=20, ge=1)
    num_train_timesteps: int = Field(default=1000, ge=2)
    beta_start: float = Field(default=0.00085, gt=0.0)
    beta_end: float = Field(default=0.012, gt=0.0)
    t_min: float = Field(default=0.02, ge=0.0, le=1.0)
    t_max: float = Field(default=0.98, ge=0.0, le=1.0)

    @model_validator(mode="after")
    def _check_range(self) -> "PriorConfig":
        if self.t_min > self.t_max:
            raise ValueError(f"t_min ({self.t_min}) exceeds t_max ({self.t_max})")
        return self


class TrainingRecord(BaseModel):
    """One line of the training log"""
    iteration: int
    frame: int
    views: List[str] = []
    losses: Dict[str, float]
    splat_count: int
    elapsed: float


@dataclass
class AdamState:
    """Moments of one parameter tensor"""
    exp_avg: torch.Tensor
    exp_avg_sq: torch.Tensor
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, param: torch.Tensor) -> "AdamState":
        return cls(torch.zeros_like(param), torch.zeros_like(param))


@dataclass
class LineageEvent:
    """Parent → children record of one densification event"""
    iteration: int
    kind: str
    parent: int
    children: List[int]
    binding: int


@dataclass
class TrainingResult:
    splats: SplatSet
    records: List[TrainingRecord] = field(default_factory=list)
    lineage: List[LineageEvent] = field(default_factory=list)
    checkpoint: Optional[str] = None
