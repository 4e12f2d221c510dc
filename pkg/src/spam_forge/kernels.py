"""Backend selection for the hot loops.

The compiled extension is used when importable; setting ``SPAM_FORGE_PURE=1``
forces the numpy fallback.
"""
import os

from . import _fallback
from .errors import ArgumentError

BACKEND = "python"
_impl = _fallback
if os.environ.get("SPAM_FORGE_PURE", "0") != "1":
    try:
        from . import _kernels as _impl  # noqa: F811
        BACKEND = "compiled"
    except ImportError:
        _impl = _fallback


def backend(name=None):
    """Module implementing the kernels; ``name`` picks 'compiled' or 'python' explicitly."""
    if name is None:
        return _impl
    if name == "python":
        return _fallback
    if name == "compiled":
        from . import _kernels
        return _kernels
    raise ArgumentError(f"unknown backend {name!r}")


def build_power_affine(*args, **kwargs):
    return _impl.build_power_affine(*args, **kwargs)


def bfs_distances(indptr, indices, source, max_depth=-1):
    return _impl.bfs_distances(indptr, indices, source, max_depth)
