"""Layout-aware document prompting and execution-process tagging for
curating document instruction data."""

from .errors import ProcTagError

__version__ = "0.1.0"

__all__ = ["ProcTagError", "__version__"]
