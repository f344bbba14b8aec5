# splat_avatar/exceptions/render_exceptions.py
"""
Render, gradient and loss exceptions
"""

from .base_exceptions import SplatAvatarError


class ShapeMismatch(SplatAvatarError):
    """Two buffers or tensors that must agree in shape do not"""

    category = "shape"


class IndexMismatch(SplatAvatarError):
    """Per-splat arrays are no longer index-aligned"""

    category = "index"


class TooSmall(SplatAvatarError):
    """Image smaller than the SSIM window"""

    category = "shape"
