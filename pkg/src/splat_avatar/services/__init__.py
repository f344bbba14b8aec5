# splat_avatar/services/__init__.py
"""
Services package
"""
