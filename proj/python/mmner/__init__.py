"""Multimodal named entity recognition with visual attention.

The heavy lifting happens in the compiled ``_mmner`` extension; this package
re-exports it.
"""

from ._mmner import *  # noqa: F401,F403
from ._mmner import __doc__  # noqa: F401

__all__ = [name for name in dir() if not name.startswith("_")]
