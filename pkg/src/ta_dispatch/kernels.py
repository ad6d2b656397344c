"""Routing kernel selection.

The compiled extension is used when it imports; set ``TA_DISPATCH_PURE=1``
to force the numpy fallback.
"""
import os

from . import _kernels_py

if os.environ.get("TA_DISPATCH_PURE", "") not in ("", "0"):
    _impl = _kernels_py
else:
    try:
        from . import _kernels as _impl
    except ImportError:
        _impl = _kernels_py

BACKEND = "python" if _impl is _kernels_py else "cython"
topk_select = _impl.topk_select
capacity_keep = _impl.capacity_keep
