"""Kernel backend selection.

The compiled extension is preferred; the numpy fallback is used when it is
missing or when ``EXTDIV_PURE_PYTHON=1`` is set before import.
"""
import os

from . import _core_py

if os.environ.get("EXTDIV_PURE_PYTHON", "") not in ("", "0"):
    kernels = _core_py
else:
    try:
        from . import _core as kernels
    except ImportError:  # extension not built
        kernels = _core_py

BACKEND = "python" if kernels is _core_py else "compiled"
