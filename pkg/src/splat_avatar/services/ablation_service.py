# splat_avatar/services/ablation_service.py
"""
Ablation service - train the supervision variants on one dataset and tabulate their metrics
"""

from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

from ..config.training_config import TrainingConfig
from ..exceptions import ConfigError, IoError
from ..models.harness_model import AblationRow, Dataset, EvalSplit
from ..models.training_model import ViewSupervision
from ..schemas.report_schemas import AblationRecordSchema
from ..utils.logging_utils import logger
from .dataset_service import DatasetImages
from .eval_service import eval_split
from .prior_service import build_oracle
from .training_service import DTYPES, TrainingScene, train_avatar

# Variant name -> config overrides applied on top of the base config
ABLATION_VARIANTS: Dict[str, dict] = {
    "no_diffusion": {"view_supervision": ViewSupervision.OFF},
    "sds": {"view_supervision": ViewSupervision.DIFFUSION_LIKE, "sds_mode": True},
    "wo_upsampler": {"view_supervision": ViewSupervision.DIFFUSION_LIKE, "upsampler": False},
    "wo_3d_aware": {"view_supervision": ViewSupervision.DIFFUSION_LIKE, "three_d_aware": False},
    "diffusion_like": {"view_supervision": ViewSupervision.DIFFUSION_LIKE},
    "ground_truth": {"view_supervision": ViewSupervision.GROUND_TRUTH},
}


def variant_config(base: TrainingConfig, variant: str) -> TrainingConfig:
    if variant not in ABLATION_VARIANTS:
        raise ConfigError(f"unknown ablation variant (have {sorted(ABLATION_VARIANTS)})", key=variant)
    values = base.model_dump()
    values.update({"sds_mode": False, "upsampler": True, "three_d_aware": True})
    values.update(ABLATION_VARIANTS[variant])
    return TrainingConfig(**values)


def run_ablation(
    dataset: Dataset,
    base: TrainingConfig,
    out_dir: Union[str, Path],
    variants: Optional[Sequence[str]] = None,
    workers: Optional[int] = None,
) -> List[AblationRow]:
    """Train and evaluate every variant; writes ablation_table.txt and ablation.jsonl"""
    out = Path(out_dir)
    names = list(variants) if variants else list(ABLATION_VARIANTS)
    dtype = DTYPES[base.dtype]
    scene = TrainingScene.from_dataset(dataset, dtype=dtype)
    lookup = DatasetImages(dataset, dtype=dtype)

    rows = []
    for name in names:
        config = variant_config(base, name)
        logger.info(f"🔄 Ablation variant '{name}'")
        result = train_avatar(scene, build_oracle(config, lookup), config, out_dir=out / name, workers=workers)
        novel_view = eval_split(result.splats, dataset, EvalSplit.NOVEL_VIEW, scene.mesh, lookup, workers)
        novel_expression = None
        if dataset.split_pairs(EvalSplit.NOVEL_EXPRESSION):
            novel_expression = eval_split(result.splats, dataset, EvalSplit.NOVEL_EXPRESSION, scene.mesh, lookup, workers)
        rows.append(AblationRow(variant=name, novel_view=novel_view, novel_expression=novel_expression))

    write_ablation_table(rows, out)
    return rows


def format_ablation_table(rows: Sequence[AblationRow]) -> str:
    header = f"{'variant':<16}{'NV PSNR':>10}{'NV SSIM':>10}{'NV L1':>10}{'NE PSNR':>10}{'NE SSIM':>10}{'NE L1':>10}"
    lines = [header]
    for row in rows:
        line = f"{row.variant:<16}{row.novel_view.psnr:>10.2f}{row.novel_view.ssim:>10.4f}{row.novel_view.l1:>10.4f}"
        expr = row.novel_expression
        if expr is not None:
            line += f"{expr.psnr:>10.2f}{expr.ssim:>10.4f}{expr.l1:>10.4f}"
        else:
            line += f"{'-':>10}{'-':>10}{'-':>10}"
        lines.append(line)
    return "\n".join(lines) + "\n"


def write_ablation_table(rows: Sequence[AblationRow], out_dir: Path):
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "ablation_table.txt").write_text(format_ablation_table(rows), encoding="utf-8")
        with open(out_dir / "ablation.jsonl", "w", encoding="utf-8") as file:
            for row in rows:
                file.write(AblationRecordSchema.from_row(row).model_dump_json() + "\n")
    except OSError as e:
        raise IoError(f"cannot write ablation table: {e}", path=str(out_dir))
