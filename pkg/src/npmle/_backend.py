"""Pick the compiled kernels when importable, else the NumPy fallback.

Set ``NPMLE_BACKEND=python`` to force the fallback.
"""

import os

from npmle import _pykernels

if os.environ.get("NPMLE_BACKEND", "").lower() == "python":
    _impl = _pykernels
    BACKEND = "python"
else:
    try:
        from npmle import _ckernels as _impl
        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _pykernels
        BACKEND = "python"

mixture_stats = _impl.mixture_stats
field_values = _impl.field_values


def available_backends():
    """Map backend name -> kernel module for everything importable."""
    out = {"python": _pykernels}
    try:
        from npmle import _ckernels
        out["cython"] = _ckernels
    except ImportError:
        pass
    return out
