"""Backend selection for the assignment kernels.

The compiled extension is used when importable; set ``BRIDGEALIGN_PURE=1`` to
force the pure-Python implementation.
"""

import os

from . import _assign_py

pure = _assign_py

try:
    if os.environ.get("BRIDGEALIGN_PURE", "") not in ("", "0"):
        raise ImportError("pure backend requested")
    from . import _kernels as compiled
except ImportError:
    compiled = None

backend = compiled if compiled is not None else pure
BACKEND = "compiled" if compiled is not None else "python"
