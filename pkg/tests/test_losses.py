# tests/test_losses.py
import math

import pytest
import torch

from splat_avatar.core.losses import (
    PSNR_CAP,
    capped_psnr,
    clear_perceptual_backend,
    image_loss,
    l1_loss,
    pos_regularizer,
    psnr,
    register_perceptual_backend,
    scale_regularizer,
    ssim,
    total_loss,
)
from splat_avatar.exceptions import ShapeMismatch, TooSmall
from splat_avatar.models.geometry_model import RiggedSplat
from splat_avatar.models.image_model import ImageBuffer
from splat_avatar.models.training_model import LossWeights

SSIM_CONSTANT = (2 * 0.30 + 1e-4) / (0.25 + 0.36 + 1e-4)


def _constant(value: float, size: int = 32) -> torch.Tensor:
    return torch.full((size, size, 3), value, dtype=torch.float64)


@pytest.fixture(autouse=True)
def no_perceptual_backend():
    clear_perceptual_backend()
    yield
    clear_perceptual_backend()


def test_l1_of_constants():
    assert float(l1_loss(_constant(0.5), _constant(0.6))) == pytest.approx(0.1)


def test_ssim_of_constants():
    assert float(ssim(_constant(0.5), _constant(0.6))) == pytest.approx(SSIM_CONSTANT, abs=1e-3)
    assert SSIM_CONSTANT == pytest.approx(0.9836, abs=1e-4)


def test_ssim_of_identical_images_is_one():
    img = torch.rand((24, 24, 3), generator=torch.Generator().manual_seed(0), dtype=torch.float64)
    assert float(ssim(img, img)) == pytest.approx(1.0, abs=1e-12)


def test_ssim_accepts_image_buffers():
    a, b = ImageBuffer(_constant(0.5)), ImageBuffer(_constant(0.6))
    assert float(ssim(a, b)) == pytest.approx(SSIM_CONSTANT, abs=1e-3)


def test_ssim_rejects_small_and_mismatched_images():
    with pytest.raises(TooSmall):
        ssim(_constant(0.5, 8), _constant(0.5, 8))
    with pytest.raises(ShapeMismatch):
        ssim(_constant(0.5, 16), _constant(0.5, 32))


def test_d_ssim_keeps_its_gradient_on_anti_correlated_images():
    truth = torch.rand((32, 32, 3), generator=torch.Generator().manual_seed(5), dtype=torch.float64)
    render = (1.0 - truth).requires_grad_(True)
    assert float(ssim(render, truth)) == 0.0
    loss = image_loss(render, truth, LossWeights(lambda1=0.0, lambda2=1.0, lambda3=0.0))
    assert float(loss) > 1.0
    (grad,) = torch.autograd.grad(loss, render)
    assert grad.abs().sum() > 0


def test_psnr():
    assert psnr(_constant(0.5), _constant(0.6)) == pytest.approx(20.0)
    assert math.isinf(psnr(_constant(0.5), _constant(0.5)))
    assert capped_psnr(math.inf) == PSNR_CAP


def test_image_loss_without_perceptual_backend():
    loss = image_loss(_constant(0.5), _constant(0.6), LossWeights())
    assert float(loss) == pytest.approx(0.8 * 0.1 + 0.2 * (1 - SSIM_CONSTANT), abs=1e-4)
    assert float(loss) == pytest.approx(0.0833, abs=1e-3)


def test_image_loss_with_perceptual_backend():
    register_perceptual_backend(lambda a, b: (a - b).abs().max())
    loss = image_loss(_constant(0.5), _constant(0.6), LossWeights())
    assert float(loss) == pytest.approx(0.8 * 0.1 + 0.2 * (1 - SSIM_CONSTANT) + 0.1 * 0.1, abs=1e-4)


def test_pos_regularizer_floors_small_components():
    mu = torch.tensor([[2.0, 0.0, 0.0]], dtype=torch.float64)
    assert float(pos_regularizer(mu, 1.0)) == pytest.approx(math.sqrt(6), abs=1e-9)


def test_scale_regularizer_floors_small_components():
    splat = RiggedSplat(scale_local=(1.0, 0.1, 0.1))
    assert float(scale_regularizer([splat], 0.6)) == pytest.approx(math.sqrt(1.72), abs=1e-9)
    assert math.sqrt(1.72) == pytest.approx(1.3115, abs=1e-4)


def test_regularizers_are_flat_inside_the_threshold():
    mu = torch.tensor([[0.5, -0.2, 0.1], [0.3, 0.3, -0.9]], dtype=torch.float64, requires_grad=True)
    pos_regularizer(mu, 1.0).backward()
    assert torch.count_nonzero(mu.grad) == 0

    step = 1e-4
    base = float(pos_regularizer(mu.detach(), 1.0))
    nudged = mu.detach().clone()
    nudged[0, 0] += step
    assert float(pos_regularizer(nudged, 1.0)) == base


def test_regularizer_gradient_outside_the_threshold():
    mu = torch.tensor([[2.0, 0.0, 0.0]], dtype=torch.float64, requires_grad=True)
    pos_regularizer(mu, 1.0).backward()
    assert mu.grad[0, 0].item() == pytest.approx(2.0 / math.sqrt(6))
    assert mu.grad[0, 1:].abs().max() == 0


def test_default_weights():
    w = LossWeights()
    assert (w.lambda1, w.lambda2, w.lambda_pos, w.lambda_scale, w.eps_pos, w.eps_scale) == (0.8, 0.2, 0.01, 1.0, 1.0, 0.6)
    assert w.lambda3 == 0.1


def test_total_loss_composes_terms():
    w = LossWeights()
    splats = [RiggedSplat(mu_local=(2.0, 0.0, 0.0), scale_local=(1.0, 0.1, 0.1))]
    result = total_loss(
        (_constant(0.5), _constant(0.6)),
        [(_constant(0.5), _constant(0.6)), (_constant(0.5), _constant(0.6))],
        splats,
        w,
    )
    image = 0.8 * 0.1 + 0.2 * (1 - SSIM_CONSTANT)
    expected = image + image + 0.01 * math.sqrt(6) + 1.0 * math.sqrt(1.72)
    assert float(result.total) == pytest.approx(expected, abs=1e-3)
    assert result.breakdown["view"] == pytest.approx(image, abs=1e-3)
    assert len(result.image_grads) == 3


def test_total_loss_image_gradients_match_autograd():
    w = LossWeights()
    render = torch.rand((16, 16, 3), generator=torch.Generator().manual_seed(4), dtype=torch.float64)
    target = torch.rand((16, 16, 3), generator=torch.Generator().manual_seed(5), dtype=torch.float64)
    result = total_loss((render, target), [], [RiggedSplat()], w)

    leaf = render.clone().requires_grad_(True)
    image_loss(leaf, target, w).backward()
    assert torch.allclose(result.rec_grad, leaf.grad, atol=1e-12)
    assert result.view_grads == []


def test_sds_views_use_the_gradient_image():
    w = LossWeights()
    g = torch.full((16, 16, 3), 0.25, dtype=torch.float64)
    result = total_loss(
        (_constant(0.5, 16), _constant(0.5, 16)), [(_constant(0.3, 16), g)], [RiggedSplat()], w, sds_views=True
    )
    assert torch.allclose(result.view_grads[0], g)
