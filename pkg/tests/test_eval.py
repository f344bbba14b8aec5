# tests/test_eval.py
import json

import pytest
import torch

from splat_avatar.core.geometry import build_frame_batch
from splat_avatar.core.losses import clear_perceptual_backend, register_perceptual_backend
from splat_avatar.core.rasterizer import render_splats
from splat_avatar.exceptions import DatasetError
from splat_avatar.models.harness_model import EvalSplit, ImageMetrics
from splat_avatar.services.dataset_service import read_mesh
from splat_avatar.services.eval_service import aggregate, eval_split, format_report, image_metrics, write_eval_reports
from splat_avatar.services.prior_service import dict_lookup

from conftest import random_splats


@pytest.fixture(autouse=True)
def no_perceptual_backend():
    clear_perceptual_backend()
    yield
    clear_perceptual_backend()


def _own_renders(splats, dataset, split):
    mesh = read_mesh(dataset)
    images = {}
    for view, t in dataset.split_pairs(split):
        with torch.no_grad():
            images[(view, t)] = render_splats(splats, build_frame_batch(mesh, t), dataset.cameras[view]).color
    return dict_lookup(images)


def test_identical_image_scores():
    image = torch.rand((32, 32, 3), generator=torch.Generator().manual_seed(0), dtype=torch.float64)
    m = image_metrics(image, image.clone(), "cam_00", 0)
    assert m.l1 == 0.0
    assert m.psnr == 100.0
    assert m.ssim == pytest.approx(1.0, abs=1e-12)
    assert m.lpips is None


def test_scoring_own_renders_is_perfect(tiny_dataset):
    splats = random_splats(30, seed=2, spread=0.1, scale=(0.05, 0.2))
    lookup = _own_renders(splats, tiny_dataset, EvalSplit.NOVEL_VIEW)
    report = eval_split(splats, tiny_dataset, EvalSplit.NOVEL_VIEW, ground_truth=lookup)
    assert len(report.images) == 6
    assert report.l1 == 0.0
    assert report.psnr == 100.0
    assert report.ssim == pytest.approx(1.0, abs=1e-9)


def test_scoring_against_the_dataset(tiny_dataset):
    splats = random_splats(30, seed=3)
    report = eval_split(splats, tiny_dataset, EvalSplit.NOVEL_EXPRESSION)
    assert [(m.view, m.timestep) for m in report.images] == tiny_dataset.split_pairs(EvalSplit.NOVEL_EXPRESSION)
    assert report.psnr == pytest.approx(sum(m.psnr for m in report.images) / 3)
    assert report.l1 == pytest.approx(sum(m.l1 for m in report.images) / 3)
    assert 0.0 < report.psnr < 100.0


def test_missing_ground_truth_is_a_dataset_error(tiny_dataset):
    with pytest.raises(DatasetError):
        eval_split(random_splats(2, seed=0), tiny_dataset, EvalSplit.NOVEL_VIEW, ground_truth=dict_lookup({}))


def _metrics(view, t, l1, psnr, ssim, lpips=None):
    return ImageMetrics(view=view, timestep=t, l1=l1, psnr=psnr, ssim=ssim, lpips=lpips)


def test_aggregate_is_an_unweighted_mean():
    images = [_metrics("a", 0, 0.1, 20.0, 0.5), _metrics("a", 1, 0.3, 30.0, 0.7), _metrics("b", 0, 0.2, 40.0, 0.9)]
    report = aggregate(EvalSplit.NOVEL_VIEW, images)
    assert report.l1 == pytest.approx(0.2)
    assert report.psnr == pytest.approx(30.0)
    assert report.ssim == pytest.approx(0.7)
    assert report.lpips is None
    assert report.per_view()["a"]["psnr"] == pytest.approx(25.0)


def test_lpips_is_reported_with_a_backend():
    register_perceptual_backend(lambda a, b: (a - b).abs().mean())
    a = torch.full((16, 16, 3), 0.5, dtype=torch.float64)
    m = image_metrics(a, a + 0.1, "cam_00", 0)
    assert m.lpips == pytest.approx(0.1)
    report = aggregate(EvalSplit.NOVEL_VIEW, [m])
    assert report.lpips == pytest.approx(0.1)
    assert "LPIPS" in format_report(report)


def test_report_files(tmp_path):
    report = aggregate(EvalSplit.NOVEL_EXPRESSION, [_metrics("cam_01", 4, 0.05, 25.0, 0.8)])
    text_path, jsonl_path = write_eval_reports([report], tmp_path / "eval")
    text = text_path.read_text()
    assert "[novel-expression] 1 images" in text
    assert "cam_01" in text and "mean" in text

    records = [json.loads(line) for line in jsonl_path.read_text().splitlines()]
    assert [r["kind"] for r in records] == ["image", "aggregate"]
    assert records[0]["view"] == "cam_01" and records[0]["timestep"] == 4
    assert records[1]["split"] == "novel-expression"
    assert records[1]["images"] == 1
