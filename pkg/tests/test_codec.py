# tests/test_codec.py
import pytest
import torch

from splat_avatar.core import codec
from splat_avatar.core.codec import (
    available_upsamplers,
    codec_decode,
    codec_encode,
    downsample_image,
    register_upsampler_backend,
    resize_image,
    upsample_latent,
)
from splat_avatar.exceptions import BackendUnavailable, BadDimensions
from splat_avatar.models.image_model import ImageBuffer
from splat_avatar.models.prior_model import Latent


def test_constant_image_survives_the_codec():
    image = ImageBuffer(torch.full((64, 64, 3), 0.7, dtype=torch.float64))
    latent = codec_encode(image)
    assert latent.shape == (3, 8, 8)
    assert torch.allclose(codec_decode(latent).data, image.data, atol=1e-12)


def test_latent_is_one_eighth_of_the_image():
    image = torch.rand((512, 512, 3), generator=torch.Generator().manual_seed(0), dtype=torch.float64)
    assert codec_encode(image).shape == (3, 64, 64)


def test_decode_clamps_to_unit_range():
    latent = Latent(torch.full((3, 2, 2), 1.5, dtype=torch.float64))
    decoded = codec_decode(latent)
    assert decoded.shape == (16, 16, 3)
    assert decoded.data.max() == 1.0


def test_encode_rejects_odd_sizes():
    with pytest.raises(BadDimensions):
        codec_encode(torch.zeros((20, 24, 3), dtype=torch.float64))


def test_upsampler_doubles_and_keeps_ramps_affine():
    ramp = torch.arange(6, dtype=torch.float64).expand(4, 5, 6).clone()
    out = upsample_latent(Latent(ramp))
    assert out.shape == (4, 10, 12)
    steps = out.data[..., 1:] - out.data[..., :-1]
    assert torch.allclose(steps, torch.full_like(steps, 5.0 / 11.0), atol=1e-12)
    assert torch.allclose(out.data[..., 0], torch.zeros((4, 10), dtype=torch.float64))
    assert torch.allclose(out.data[..., -1], torch.full((4, 10), 5.0, dtype=torch.float64))


def test_unknown_upsampler_backend():
    assert "bilinear" in available_upsamplers()
    with pytest.raises(BackendUnavailable):
        upsample_latent(Latent.scalar(0.0), "learned")


def test_backend_with_wrong_output_shape(monkeypatch):
    monkeypatch.setitem(codec._UPSAMPLER_BACKENDS, "identity", lambda z: z)
    with pytest.raises(BadDimensions):
        upsample_latent(Latent.scalar(0.0), "identity")


def test_registered_backend_is_used(monkeypatch):
    monkeypatch.setattr(codec, "_UPSAMPLER_BACKENDS", dict(codec._UPSAMPLER_BACKENDS))
    register_upsampler_backend("nearest", lambda z: z.repeat_interleave(2, dim=-2).repeat_interleave(2, dim=-1))
    assert available_upsamplers() == ["bilinear", "nearest"]
    data = torch.arange(12, dtype=torch.float64).reshape(3, 2, 2)
    out = upsample_latent(Latent(data), "nearest")
    assert out.shape == (3, 4, 4)
    assert torch.equal(out.data[:, ::2, ::2], data)
    assert torch.equal(out.data[:, 1::2, 1::2], data)


def test_downsample_and_resize():
    image = torch.rand((16, 16, 3), generator=torch.Generator().manual_seed(1), dtype=torch.float64)
    assert downsample_image(image, 1) is image
    small = downsample_image(image, 2)
    assert small.shape == (8, 8, 3)
    assert small[0, 0].tolist() == pytest.approx(image[:2, :2].mean(dim=(0, 1)).tolist())
    assert resize_image(small, (16, 16)).shape == (16, 16, 3)
