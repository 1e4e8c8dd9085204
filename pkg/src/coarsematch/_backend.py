"""Dispatch kernel selection.

Prefers the compiled kernel; falls back to the pure-Python twin when the
extension is missing or COARSEMATCH_PURE_PYTHON is set to a nonempty value.
Both produce bit-identical outputs.
"""

from __future__ import annotations

import os

if os.environ.get("COARSEMATCH_PURE_PYTHON"):
    from . import _dispatch_py as _impl

    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]

        BACKEND = "compiled"
    except ImportError:
        from . import _dispatch_py as _impl

        BACKEND = "python"

run_dispatch = _impl.run_dispatch
