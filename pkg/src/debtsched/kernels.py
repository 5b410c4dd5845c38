"""Backend selection for the hot kernels.

The compiled extension is used when it was built; otherwise, or when
``DEBTSCHED_BACKEND=python`` is set, the pure-Python kernels are loaded.
Both produce bit-identical results.
"""

from __future__ import annotations

import os
from types import ModuleType

from debtsched import _pykernel


def _load() -> tuple[ModuleType, str]:
    if os.environ.get("DEBTSCHED_BACKEND", "").lower() == "python":
        return _pykernel, "python"
    try:
        from debtsched import _ckernel
    except ImportError:
        return _pykernel, "python"
    return _ckernel, "cython"


impl, BACKEND = _load()

run_frames = impl.run_frames
convolve_geometric = impl.convolve_geometric
phi_kernel = impl.phi


def backends() -> dict[str, ModuleType]:
    """Every importable backend, keyed by name (for cross-checks and benchmarks)."""
    found = {"python": _pykernel}
    try:
        from debtsched import _ckernel
    except ImportError:
        pass
    else:
        found["cython"] = _ckernel
    return found
