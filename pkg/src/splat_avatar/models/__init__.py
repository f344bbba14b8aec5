# splat_avatar/models/__init__.py
"""
Models package
"""

from .geometry_model import (
    Camera,
    FrameBatch,
    GaussianBatch,
    GaussianWorld,
    RiggedSplat,
    RigMesh,
    SplatSet,
    TriangleFrame,
)
from .image_model import (
    DensifyStats,
    ImageBuffer,
    Projected2D,
    ProjectedBatch,
    RenderOutput,
    SplatGradients,
)
from .prior_model import DdimSchedule, Latent
from .harness_model import AblationRow, Dataset, EvalReport, EvalSplit, ImageMetrics
from .training_model import (
    AdamState,
    LineageEvent,
    LossWeights,
    OptimConfig,
    PriorConfig,
    TrainingRecord,
    TrainingResult,
    UpsamplerBackend,
    ViewSupervision,
)

__all__ = [
    "Camera",
    "FrameBatch",
    "GaussianBatch",
    "GaussianWorld",
    "RiggedSplat",
    "RigMesh",
    "SplatSet",
    "TriangleFrame",
    "DensifyStats",
    "ImageBuffer",
    "Projected2D",
    "ProjectedBatch",
    "RenderOutput",
    "SplatGradients",
    "DdimSchedule",
    "Latent",
    "AblationRow",
    "Dataset",
    "EvalReport",
    "EvalSplit",
    "ImageMetrics",
    "AdamState",
    "LineageEvent",
    "LossWeights",
    "OptimConfig",
    "PriorConfig",
    "TrainingRecord",
    "TrainingResult",
    "UpsamplerBackend",
    "ViewSupervision",
]
