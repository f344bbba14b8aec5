# splat_avatar/models/harness_model.py
"""
Harness core models - dataset layout and evaluation reports
"""

from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional

from pydantic import BaseModel, Field

from .geometry_model import Camera


class EvalSplit(str, Enum):
    NOVEL_VIEW = "novel-view"
    NOVEL_EXPRESSION = "novel-expression"


class Dataset(BaseModel):
    """Monocular training sequence, held-out cameras and the tracked mesh on disk"""
    root: Path
    cameras: Dict[str, Camera]
    train_view: str
    heldout_views: List[str]
    expression_views: List[str] = []
    n_frames: int = Field(ge=1)
    train_timesteps: List[int]
    test_timesteps: List[int] = []

    @property
    def faces_path(self) -> Path:
        return self.root / "mesh" / "faces.obj"

    def mesh_path(self, timestep: int) -> Path:
        return self.root / "mesh" / f"frame_{timestep:04d}.obj"

    def image_path(self, view: str, timestep: int) -> Path:
        return self.root / "images" / view / f"frame_{timestep:04d}.png"

    def split_pairs(self, split: EvalSplit) -> List[tuple]:
        """(view, timestep) pairs evaluated for a split"""
        if split == EvalSplit.NOVEL_VIEW:
            return [(view, t) for view in self.heldout_views for t in self.train_timesteps]
        return [(view, t) for view in self.expression_views for t in self.test_timesteps]


class ImageMetrics(BaseModel):
    """Metrics of one rendered image against its ground truth"""
    view: str
    timestep: int
    l1: float
    psnr: float
    ssim: float
    lpips: Optional[float] = None


class EvalReport(BaseModel):
    """Per-image and aggregate metrics of one evaluation split"""
    split: EvalSplit
    images: List[ImageMetrics] = []
    l1: float = 0.0
    psnr: float = 0.0
    ssim: float = 0.0
    lpips: Optional[float] = None

    @property
    def views(self) -> List[str]:
        return sorted({m.view for m in self.images})

    def per_view(self) -> Dict[str, Dict[str, float]]:
        table = {}
        for view in self.views:
            rows = [m for m in self.images if m.view == view]
            table[view] = {
                "l1": sum(m.l1 for m in rows) / len(rows),
                "psnr": sum(m.psnr for m in rows) / len(rows),
                "ssim": sum(m.ssim for m in rows) / len(rows),
            }
        return table


class AblationRow(BaseModel):
    """One variant of the ablation table"""
    variant: str
    novel_view: EvalReport
    novel_expression: Optional[EvalReport] = None
