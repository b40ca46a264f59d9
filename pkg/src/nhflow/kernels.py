"""Backend selection for the hot loops.

The compiled extension is used when it was built; otherwise, or when the
environment variable ``NHFLOW_PURE_PYTHON=1`` is set, the pure-Python
fallback is imported instead. ``BACKEND`` records which one is active.
"""

import os

if os.environ.get("NHFLOW_PURE_PYTHON") == "1":
    from ._kernels_py import unicycle_hold

    BACKEND = "python"
else:
    try:
        from ._kernels import unicycle_hold
    except ImportError:
        from ._kernels_py import unicycle_hold

        BACKEND = "python"
    else:
        BACKEND = "cython"

__all__ = ["BACKEND", "unicycle_hold"]
