"""Keyphrase generation with a catSeq generator and an adversarially trained
hierarchical-attention discriminator."""

from ._jit import JIT_ENABLED

__version__ = "0.1.0"

__all__ = ["JIT_ENABLED", "__version__"]
