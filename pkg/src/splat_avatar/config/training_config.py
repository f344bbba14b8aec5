# config/training_config.py
"""
Training configuration - the flat key/value document every train, eval and ablation run reads
"""

from typing import Any, Dict

from pydantic import ConfigDict, Field

from ..models.training_model import LossWeights, OptimConfig, PriorConfig, ViewSupervision


class TrainingConfig(OptimConfig, LossWeights, PriorConfig):
    """All optimisation, loss and prior settings in one flat namespace"""

    model_config = ConfigDict(extra="forbid", use_enum_values=False)

    log_every: int = Field(default=50, ge=1)
    checkpoint_every: int = Field(default=1000, ge=1)
    dtype: str = Field(default="float64", pattern="^(float32|float64)$")

    @classmethod
    def documented_keys(cls) -> list:
        return list(cls.model_fields)

    def to_flat_dict(self) -> Dict[str, Any]:
        return self.model_dump(mode="json")


__all__ = ["TrainingConfig", "ViewSupervision"]
