"""Hot numeric kernels: compiled when the extension is built, pure Python otherwise.

Set ``AFGNN_PURE_PYTHON=1`` to force the fallback.
"""
from __future__ import annotations

import os

from . import _pure

BACKEND = "python"
if os.environ.get("AFGNN_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _core as _impl
        BACKEND = "cython"
    except ImportError:
        _impl = _pure
else:
    _impl = _pure

expected_mutual_info = _impl.expected_mutual_info
average_linkage = _impl.average_linkage

__all__ = ["BACKEND", "average_linkage", "expected_mutual_info"]
