# splat_avatar/exceptions/prior_exceptions.py
"""
Prior (scheduler, codec, oracle) exceptions
"""

from typing import Optional

from .base_exceptions import SplatAvatarError


class BadDimensions(SplatAvatarError):
    """Image dimensions the latent codec cannot handle"""

    category = "prior"


class BackendUnavailable(SplatAvatarError):
    """Requested upsampler or perceptual backend is not registered"""

    category = "prior"


class IndexOutOfRange(SplatAvatarError):
    """Diffusion step index outside the schedule"""

    category = "prior"


class MissingGroundTruth(SplatAvatarError):
    """Ground-truth oracle asked for a camera it has no images for"""

    category = "prior"


class OracleFailure(SplatAvatarError):
    """An oracle call failed during training"""

    category = "prior"

    def __init__(self, message: str, iteration: Optional[int] = None):
        if iteration is not None:
            message = f"iteration {iteration}: {message}"
        super().__init__(message)
        self.iteration = iteration
