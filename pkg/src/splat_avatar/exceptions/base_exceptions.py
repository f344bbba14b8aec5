# splat_avatar/exceptions/base_exceptions.py
"""
Base exception - every library error carries a category for the CLI error line
"""


class SplatAvatarError(Exception):
    """Root of all library errors"""

    category = "error"

    def __init__(self, message: str):
        super().__init__(message)
        self.message = message
