"""Kernel backend selection.

The compiled extension is used when it imports; otherwise the NumPy versions
are used.  ``TICEM_KERNELS=python`` forces the fallback.
"""
import os

from . import _fallback

BACKEND = "python"
scatter_stiffness = _fallback.scatter_stiffness
cocg = _fallback.cocg

if os.environ.get("TICEM_KERNELS", "").lower() != "python":
    try:
        from . import _kernels
    except ImportError:  # extension not built
        pass
    else:
        BACKEND = "cython"
        scatter_stiffness = _kernels.scatter_stiffness
        cocg = _kernels.cocg


def backends():
    """Available ``{name: module}`` pairs, compiled first when present."""
    out = {}
    try:
        from . import _kernels
        out["cython"] = _kernels
    except ImportError:
        pass
    out["python"] = _fallback
    return out
