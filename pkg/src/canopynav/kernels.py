"""Backend selection for the simulation kernels.

Prefers the compiled Cython extension; falls back to the pure NumPy
implementation when the extension is unavailable or when the environment
variable ``CANOPYNAV_PURE_PYTHON`` is set (useful for parity testing and
benchmarking).
"""

import os

if os.environ.get("CANOPYNAV_PURE_PYTHON"):
    from . import _kernels_py as _backend
else:
    try:
        from . import _kernels_cy as _backend  # type: ignore[attr-defined]

        _backend.fk_all  # stale or partial builds fall back too
    except (ImportError, AttributeError):
        from . import _kernels_py as _backend

fk_all = _backend.fk_all
relax = _backend.relax
closest_points = _backend.closest_points


def backend_name():
    return "cython" if _backend.__name__.endswith("_cy") else "python"
