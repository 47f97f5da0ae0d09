"""Kernel backend selection.

The compiled extension is used when it imports; otherwise the numpy kernels
are used.  Both produce identical draws, so the choice only affects speed.
"""

import logging

from . import _pykernels

log = logging.getLogger(__name__)

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None
    log.debug("compiled kernels unavailable, using numpy fallback")

_BACKENDS = {"python": _pykernels}
if _ckernels is not None:
    _BACKENDS["cython"] = _ckernels

_active = _ckernels if _ckernels is not None else _pykernels


def available():
    return sorted(_BACKENDS)


def current():
    return "cython" if _active is _ckernels and _ckernels is not None else "python"


def use(name):
    """Switch the active backend ("cython" or "python"); returns the previous name."""
    global _active
    if name not in _BACKENDS:
        raise ValueError(f"unknown backend {name!r}; available: {available()}")
    previous = current()
    _active = _BACKENDS[name]
    return previous


def kernels():
    return _active
