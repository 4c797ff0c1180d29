"""Hot loops of training and scoring.

The compiled numba path is used by default.  Setting the environment variable
``SPACETIME_EMBED_BACKEND=numpy`` (read at import time) selects the vectorised
NumPy fallback instead; it is also used automatically when numba is missing.
"""
import logging
import os

log = logging.getLogger(__name__)

_requested = os.environ.get("SPACETIME_EMBED_BACKEND", "numba").strip().lower()
if _requested not in ("numba", "numpy"):
    raise ImportError(f"SPACETIME_EMBED_BACKEND must be 'numba' or 'numpy', got {_requested!r}")

BACKEND = "numpy"
if _requested == "numba":
    try:
        from . import _numba_kernels as _impl

        BACKEND = "numba"
    except ImportError:  # pragma: no cover - numba is a declared dependency
        log.warning("numba unavailable, falling back to the NumPy kernels")
if BACKEND == "numpy":
    from . import _numpy_kernels as _impl

from . import _numpy_kernels as numpy_impl

OK = 0
NONFINITE_LOSS = 1
COORD_BLOWUP = 2
REPAIR_FAILED = 3

run_epoch = _impl.run_epoch
pair_gradients = _impl.pair_gradients
probabilities = _impl.probabilities


def get_impl(name: str | None = None):
    """Kernel module by name (``"numba"`` or ``"numpy"``); default is the active one."""
    if name is None:
        return _impl
    if name == "numpy":
        return numpy_impl
    if name == "numba":
        from . import _numba_kernels

        return _numba_kernels
    raise ValueError(f"unknown backend {name!r}")
