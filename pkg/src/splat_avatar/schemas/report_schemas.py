# splat_avatar/schemas/report_schemas.py
"""
Report schemas - line-delimited evaluation records and the CLI error line
"""

from typing import List, Literal, Optional

from pydantic import BaseModel

from ..models.harness_model import AblationRow, EvalReport, EvalSplit


class ImageRecordSchema(BaseModel):
    """One evaluated image"""
    kind: Literal["image"] = "image"
    split: EvalSplit
    view: str
    timestep: int
    l1: float
    psnr: float
    ssim: float
    lpips: Optional[float] = None


class AggregateRecordSchema(BaseModel):
    """Unweighted means over every image of a split"""
    kind: Literal["aggregate"] = "aggregate"
    split: EvalSplit
    images: int
    l1: float
    psnr: float
    ssim: float
    lpips: Optional[float] = None


class AblationRecordSchema(BaseModel):
    """One row of the ablation table"""
    variant: str
    novel_view_psnr: float
    novel_view_ssim: float
    novel_view_l1: float
    novel_expression_psnr: Optional[float] = None
    novel_expression_ssim: Optional[float] = None
    novel_expression_l1: Optional[float] = None

    @classmethod
    def from_row(cls, row: AblationRow) -> "AblationRecordSchema":
        expr = row.novel_expression
        return cls(
            variant=row.variant,
            novel_view_psnr=row.novel_view.psnr,
            novel_view_ssim=row.novel_view.ssim,
            novel_view_l1=row.novel_view.l1,
            novel_expression_psnr=expr.psnr if expr else None,
            novel_expression_ssim=expr.ssim if expr else None,
            novel_expression_l1=expr.l1 if expr else None,
        )


class ErrorLineSchema(BaseModel):
    """Categorised error printed by the CLI"""
    category: str
    message: str

    def line(self) -> str:
        return f"error[{self.category}]: {self.message}"


def report_records(report: EvalReport) -> List[BaseModel]:
    records: List[BaseModel] = [
        ImageRecordSchema(split=report.split, **m.model_dump()) for m in report.images
    ]
    records.append(AggregateRecordSchema(
        split=report.split, images=len(report.images),
        l1=report.l1, psnr=report.psnr, ssim=report.ssim, lpips=report.lpips,
    ))
    return records
