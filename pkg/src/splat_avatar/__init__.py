# splat_avatar/__init__.py
"""
Mesh-rigged Gaussian splat avatars from monocular sequences
"""

__version__ = "0.1.0"
