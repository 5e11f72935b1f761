"""Pick the orbit-kernel backend at import time.

The compiled module is used when it was built; ``SRBLAB_BACKEND=python``
forces the pure-Python fallback.
"""

import os

from . import _pykernels

try:
    from . import _ckernels
except ImportError:  # pragma: no cover - depends on the build
    _ckernels = None

if os.environ.get("SRBLAB_BACKEND", "").lower() == "python" or _ckernels is None:
    kernels = _pykernels
    BACKEND = "python"
else:
    kernels = _ckernels
    BACKEND = "cython"

__all__ = ["BACKEND", "kernels", "_ckernels", "_pykernels"]
