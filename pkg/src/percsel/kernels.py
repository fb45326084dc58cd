"""Kernel backend selection.

The compiled extension is used when it imports; otherwise the numpy
fallback.  Set ``PERCSEL_BACKEND=python`` to force the fallback (useful for
benchmarks and for checking that both paths agree).
"""
import os

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if os.environ.get("PERCSEL_BACKEND", "").lower() != "python":
    try:
        from . import _ckernels as _impl  # noqa: F811
        BACKEND = "compiled"
    except ImportError:
        _impl = _pykernels


def backend(name=None):
    """Return the kernel module for ``name`` (``compiled``/``python``) or the active one."""
    if name is None:
        return _impl
    if name == "python":
        return _pykernels
    if name == "compiled":
        from . import _ckernels
        return _ckernels
    raise ValueError(f"unknown kernel backend {name!r}")


sequence_value = _impl.sequence_value
exhaustive_min = _impl.exhaustive_min
exhaustive_first_below = _impl.exhaustive_first_below
relax = _impl.relax
local_search = _impl.local_search
