"""Numba/numpy backend selection for the hot kernels.

The environment variable ``CODEDCTRL_BACKEND`` picks the execution path:

* ``numba`` (default): kernels are compiled with ``numba.njit``.
* ``numpy``: the same kernel functions run as plain Python/numpy code.

Both paths execute the identical source with the identical floating-point
operation order, so results are bit-for-bit equal; only speed differs.
``benchmarks/bench_backends.py`` measures the gap.
"""

import os

_VALID = ("numba", "numpy")

BACKEND = os.environ.get("CODEDCTRL_BACKEND", "numba").lower()
if BACKEND not in _VALID:
    raise RuntimeError(
        f"CODEDCTRL_BACKEND={BACKEND!r} not understood; expected one of {_VALID}"
    )

if BACKEND == "numba":
    try:
        import numba
    except ImportError:
        BACKEND = "numpy"

USING_NUMBA = BACKEND == "numba"


def jit(func):
    """Compile ``func`` with njit, or return it unchanged on the numpy path."""
    if USING_NUMBA:
        return numba.njit(cache=True)(func)
    return func


def make_int_map():
    """int64 -> int64 associative table usable inside kernels on either path."""
    if USING_NUMBA:
        from numba.core import types
        from numba.typed import Dict

        return Dict.empty(key_type=types.int64, value_type=types.int64)
    return {}
