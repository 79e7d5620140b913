"""Kernel backend selection.

The compiled extension is used when it imports; setting the environment
variable ``BILLIARDS_PURE_PYTHON=1`` forces the numpy fallback.
"""
import os

if os.environ.get("BILLIARDS_PURE_PYTHON", "") not in ("", "0"):
    from . import _fallback as kernels
else:
    try:
        from . import _kernels as kernels
    except ImportError:  # extension not built
        from . import _fallback as kernels

BACKEND = kernels.BACKEND

__all__ = ["kernels", "BACKEND"]
