# splat_avatar/exceptions/geometry_exceptions.py
"""
Geometry exceptions
"""

from typing import Optional

from .base_exceptions import SplatAvatarError


class DegenerateTriangle(SplatAvatarError):
    """Triangle area below the collinearity threshold"""

    category = "geometry"

    def __init__(self, message: str, face_index: Optional[int] = None):
        if face_index is not None:
            message = f"face {face_index}: {message}"
        super().__init__(message)
        self.face_index = face_index
