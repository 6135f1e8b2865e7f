"""Numba/numpy backend selection for the hot simulation kernels.

The environment variable ``GWBAR_NUMBA`` controls which implementation the
package uses:

* unset or ``auto``: use numba when it is importable, numpy otherwise;
* ``0`` / ``false`` / ``off``: force the pure-numpy path;
* ``1`` / ``true`` / ``on``: require numba, raise if it is missing.

The two paths consume random draws identically, so switching backends never
changes results, only speed (see ``benchmarks/bench_simulate.py``).
"""

import os

try:
    from numba import njit as _njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    _njit = None
    HAS_NUMBA = False

_FALSY = {"0", "false", "off", "no"}
_TRUTHY = {"1", "true", "on", "yes"}


def _resolve_use_numba() -> bool:
    flag = os.environ.get("GWBAR_NUMBA", "auto").strip().lower()
    if flag in _FALSY:
        return False
    if flag in _TRUTHY:
        if not HAS_NUMBA:
            raise ImportError("GWBAR_NUMBA=1 but numba is not installed")
        return True
    return HAS_NUMBA


USE_NUMBA = _resolve_use_numba()


def backend_name() -> str:
    """Name of the active kernel backend, "numba" or "numpy"."""
    return "numba" if USE_NUMBA else "numpy"


def njit(*args, **kwargs):
    """numba.njit passthrough; raises if numba is unavailable."""
    if not HAS_NUMBA:  # pragma: no cover
        raise ImportError("numba is not installed")
    return _njit(*args, **kwargs)
