"""Kernel backend selection.

The compiled extension is used when it imports; setting the environment
variable ``CRANBF_PURE_PYTHON=1`` forces the numpy fallback.
"""

from __future__ import annotations

import os

from . import _kernels_py

backend = _kernels_py
if os.environ.get("CRANBF_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as backend  # type: ignore[no-redef]
    except ImportError:  # extension not built
        backend = _kernels_py

IMPLEMENTATION: str = backend.IMPLEMENTATION
objective = backend.objective
gradient = backend.gradient
descend = backend.descend
bb_step = _kernels_py.bb_step

__all__ = ["IMPLEMENTATION", "objective", "gradient", "descend", "bb_step", "backend"]
