"""Hot-loop kernels with a compiled fast path and a numpy fallback.

The compiled extension is optional: if the build was skipped or the import
fails, the numpy implementation takes over with identical numerics. Set
``ATTBENCH_PURE_PYTHON=1`` to force the fallback regardless.
"""

import os

from . import kernels_py

if os.environ.get("ATTBENCH_PURE_PYTHON", "") not in ("", "0"):
    _impl = kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels_cy as _impl

        BACKEND = "compiled"
    except ImportError:
        _impl = kernels_py
        BACKEND = "python"

rk4_step_batch = _impl.rk4_step_batch

__all__ = ["rk4_step_batch", "BACKEND"]
