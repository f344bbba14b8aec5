# splat_avatar/core/__init__.py
"""
Core package - numerical kernels
"""
