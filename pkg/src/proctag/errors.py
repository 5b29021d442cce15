"""Shared exception base."""


class ProcTagError(Exception):
    """Base class for every error raised by this package."""
