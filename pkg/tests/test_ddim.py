# tests/test_ddim.py
import math

import pytest
import torch

from splat_avatar.core.ddim import add_noise, add_noise_at, ddim_sample, ddim_step
from splat_avatar.core.denoiser import ToyDenoiser, blend_attractor, toy_denoiser, DenoiserContext
from splat_avatar.exceptions import IndexOutOfRange, ShapeMismatch
from splat_avatar.models.prior_model import DdimSchedule, Latent

# index 0 is the clean sample; the stored value there is ignored
TOY = DdimSchedule(torch.tensor([0.99, 0.81, 0.5, 0.25], dtype=torch.float64))


def _latent(seed: int, shape=(4, 8, 8)) -> Latent:
    return Latent(torch.randn(shape, generator=torch.Generator().manual_seed(seed), dtype=torch.float64))


def test_hand_computed_step():
    out = ddim_step(Latent.scalar(1.0), Latent.scalar(0.5), 3, 1, TOY)
    z0_hat = (1 - math.sqrt(0.75) * 0.5) / 0.5
    assert z0_hat == pytest.approx(1.1340, abs=1e-4)
    assert out.data.item() == pytest.approx(0.9 * z0_hat + math.sqrt(0.19) * 0.5, abs=1e-12)
    assert out.data.item() == pytest.approx(1.2385, abs=1e-4)


def test_step_to_same_index_is_identity():
    z = _latent(0)
    out = ddim_step(z, _latent(1), 2, 2, TOY)
    assert torch.equal(out.data, z.data)


def test_step_rejects_bad_indices_and_shapes():
    with pytest.raises(IndexOutOfRange):
        ddim_step(Latent.scalar(1.0), Latent.scalar(0.0), 1, 2, TOY)
    with pytest.raises(IndexOutOfRange):
        ddim_step(Latent.scalar(1.0), Latent.scalar(0.0), 4, 0, TOY)
    with pytest.raises(ShapeMismatch):
        ddim_step(_latent(0), _latent(1, (4, 4, 4)), 3, 1, TOY)


def test_add_noise():
    z = add_noise_at(Latent.scalar(2.0), Latent.scalar(1.0), 3, TOY)
    assert z.data.item() == pytest.approx(0.5 * 2 + math.sqrt(0.75), abs=1e-12)
    assert z.data.item() == pytest.approx(1.8660, abs=1e-4)
    assert add_noise(Latent.scalar(2.0), Latent.scalar(1.0), 1.0, TOY).data.item() == pytest.approx(z.data.item())


def test_clean_index_returns_input():
    z0 = _latent(2)
    assert torch.equal(add_noise_at(z0, _latent(3), 0, TOY).data, z0.data)
    with pytest.raises(IndexOutOfRange):
        add_noise(z0, _latent(3), 1.5, TOY)


def test_scaled_linear_schedule():
    sched = DdimSchedule.scaled_linear()
    assert sched.T == 1000
    assert (sched.alpha_bar[1:] < sched.alpha_bar[:-1]).all()
    assert sched.alpha_bar_at(0) == 1.0
    assert 0.0 < sched.alpha_bar_at(999) < 0.01


def test_strided_timesteps():
    sched = DdimSchedule.scaled_linear()
    steps = sched.ddim_timesteps(999, 20)
    assert steps[0] == 999 and steps[-1] == 0
    assert len(steps) == math.ceil(999 / 20) + 1
    assert all(a > b for a, b in zip(steps, steps[1:]))
    assert sched.ddim_timesteps(0, 20) == [0]


def test_point_mass_prior_recovers_the_attractor():
    sched = DdimSchedule.scaled_linear()
    m = _latent(5)
    z_t = add_noise_at(_latent(6), _latent(7), 800, sched)
    out = ddim_sample(z_t, 800, ToyDenoiser(m, sched), sched, stride=20)
    assert torch.allclose(out.data, m.data, atol=1e-9)


def test_stride_and_full_chain_agree():
    sched = DdimSchedule.scaled_linear()
    m = _latent(8)
    z_t = add_noise_at(_latent(9), _latent(10), 600, sched)
    strided = ddim_sample(z_t, 600, ToyDenoiser(m, sched), sched, stride=50)
    full = ddim_sample(z_t, 600, ToyDenoiser(m, sched), sched, stride=1)
    assert torch.allclose(strided.data, full.data, atol=1e-9)


def test_toy_denoiser_predicts_the_added_noise():
    sched = DdimSchedule.scaled_linear()
    m, eps = _latent(11), _latent(12)
    z_t = add_noise_at(m, eps, 400, sched)
    assert torch.allclose(toy_denoiser(z_t, 400, DenoiserContext(m, sched)).data, eps.data, atol=1e-9)
    with pytest.raises(IndexOutOfRange):
        toy_denoiser(z_t, 0, DenoiserContext(m, sched))


def test_blend_attractor():
    out = blend_attractor(Latent.scalar(1.0), Latent.scalar(0.0), 0.8)
    assert out.data.item() == pytest.approx(0.8)
    with pytest.raises(ShapeMismatch):
        blend_attractor(_latent(0), _latent(1, (4, 2, 2)), 0.5)
