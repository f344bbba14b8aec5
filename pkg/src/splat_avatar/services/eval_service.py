# splat_avatar/services/eval_service.py
"""
Evaluation service - novel-view and novel-expression metrics against ground truth
"""

from pathlib import Path
from typing import Callable, Iterable, Optional, Union

import torch

from ..core.geometry import build_frame_batch
from ..core.losses import capped_psnr, has_perceptual_backend, l1_loss, perceptual_registry, psnr, ssim
from ..core.rasterizer import render_splats
from ..exceptions import DatasetError, IoError
from ..models.geometry_model import RigMesh, SplatSet
from ..models.harness_model import Dataset, EvalReport, EvalSplit, ImageMetrics
from ..schemas.report_schemas import report_records
from ..utils.logging_utils import logger
from .dataset_service import DatasetImages, read_mesh

GroundTruthLookup = Callable[[str, int], Optional[torch.Tensor]]


def image_metrics(render: torch.Tensor, truth: torch.Tensor, view: str, timestep: int) -> ImageMetrics:
    with torch.no_grad():
        lpips = None
        if has_perceptual_backend():
            lpips = float(perceptual_registry.backend(render, truth.to(render.dtype)))
        return ImageMetrics(
            view=view,
            timestep=timestep,
            l1=float(l1_loss(render, truth)),
            psnr=capped_psnr(psnr(render, truth)),
            ssim=float(ssim(render, truth)),
            lpips=lpips,
        )


def aggregate(split: EvalSplit, images: list) -> EvalReport:
    """Unweighted means over the evaluated images"""
    n = len(images)
    lpips = [m.lpips for m in images if m.lpips is not None]
    return EvalReport(
        split=split,
        images=images,
        l1=sum(m.l1 for m in images) / n,
        psnr=sum(m.psnr for m in images) / n,
        ssim=sum(m.ssim for m in images) / n,
        lpips=sum(lpips) / len(lpips) if len(lpips) == n else None,
    )


def eval_split(
    splats: SplatSet,
    dataset: Dataset,
    split: EvalSplit,
    mesh: Optional[RigMesh] = None,
    ground_truth: Optional[GroundTruthLookup] = None,
    workers: Optional[int] = None,
) -> EvalReport:
    """Render every (camera, timestep) pair of the split and score it against ground truth"""
    pairs = dataset.split_pairs(split)
    if not pairs:
        raise DatasetError(f"split '{split.value}' has no images")
    dtype = splats.mu.dtype
    mesh = mesh if mesh is not None else read_mesh(dataset, dtype=dtype)
    ground_truth = ground_truth or DatasetImages(dataset, dtype=dtype)

    images = []
    frames = {}
    for view, t in pairs:
        truth = ground_truth(view, t)
        if truth is None:
            raise DatasetError(f"missing ground truth for camera '{view}' at timestep {t}")
        if t not in frames:
            frames[t] = build_frame_batch(mesh, t)
        with torch.no_grad():
            render = render_splats(splats.detach(), frames[t], dataset.cameras[view], workers=workers).color
        images.append(image_metrics(render, truth, view, t))

    report = aggregate(split, images)
    logger.log_eval_complete(split.value, len(images), report.psnr, report.ssim)
    return report


def format_report(report: EvalReport) -> str:
    """Human-readable table: one row per view plus the mean"""
    header = f"{'view':<12}{'L1':>10}{'PSNR':>10}{'SSIM':>10}"
    if report.lpips is not None:
        header += f"{'LPIPS':>10}"
    lines = [f"[{report.split.value}] {len(report.images)} images", header]
    for view, row in report.per_view().items():
        line = f"{view:<12}{row['l1']:>10.4f}{row['psnr']:>10.2f}{row['ssim']:>10.4f}"
        if report.lpips is not None:
            values = [m.lpips for m in report.images if m.view == view]
            line += f"{sum(values) / len(values):>10.4f}"
        lines.append(line)
    mean = f"{'mean':<12}{report.l1:>10.4f}{report.psnr:>10.2f}{report.ssim:>10.4f}"
    if report.lpips is not None:
        mean += f"{report.lpips:>10.4f}"
    lines.append(mean)
    return "\n".join(lines) + "\n"


def write_eval_reports(reports: Iterable[EvalReport], out_dir: Union[str, Path]) -> tuple:
    """eval_report.txt and eval_report.jsonl under out_dir"""
    out = Path(out_dir)
    reports = list(reports)
    text_path, jsonl_path = out / "eval_report.txt", out / "eval_report.jsonl"
    try:
        out.mkdir(parents=True, exist_ok=True)
        text_path.write_text("\n".join(format_report(r) for r in reports), encoding="utf-8")
        with open(jsonl_path, "w", encoding="utf-8") as file:
            for report in reports:
                for record in report_records(report):
                    file.write(record.model_dump_json() + "\n")
    except OSError as e:
        raise IoError(f"cannot write evaluation report: {e}", path=str(out))
    return text_path, jsonl_path
