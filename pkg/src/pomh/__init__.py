"""Oscillatory handwriting reconstruction and two-layer dysgraphia classification."""

from pomh._kernels import HAVE_FAST, IMPL as KERNEL_IMPL

__version__ = "0.1.0"

__all__ = ["HAVE_FAST", "KERNEL_IMPL", "__version__"]
