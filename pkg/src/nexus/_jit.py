"""numba switch.

Set ``NEXUS_JIT=0`` to run every hot kernel through its pure-numpy path.
"""

from __future__ import annotations

import os

JIT_REQUESTED = os.environ.get("NEXUS_JIT", "1").strip().lower() not in ("0", "false", "no", "off")

try:
    import numba

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAS_NUMBA = False

JIT_ENABLED = JIT_REQUESTED and HAS_NUMBA

if HAS_NUMBA:
    njit = numba.njit
else:  # pragma: no cover

    def njit(func=None, **kwargs):
        if func is not None:
            return func
        return lambda f: f
