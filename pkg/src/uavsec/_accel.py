"""Backend selection for the hot solver kernels.

The inner solver loop is compiled with numba by default. Setting the
environment variable ``UAVSEC_BACKEND=numpy`` selects the interpreted
fallback (same code, no JIT): slow, but dependency-free and useful for
debugging. ``python -m uavsec.bench`` compares the two.
"""

from __future__ import annotations

import os

ENV_VAR = "UAVSEC_BACKEND"
_VALID = ("numba", "numpy")


def available_backends() -> tuple:
    try:
        import numba  # noqa: F401
        return ("numba", "numpy")
    except ImportError:
        return ("numpy",)


def default_backend() -> str:
    req = os.environ.get(ENV_VAR, "").strip().lower()
    if req:
        if req not in _VALID:
            raise ValueError(f"{ENV_VAR}={req!r}: expected one of {_VALID}")
        if req == "numba" and "numba" not in available_backends():
            raise ValueError(f"{ENV_VAR}=numba but numba is not importable")
        return req
    return "numba" if "numba" in available_backends() else "numpy"


def jit_compile(func):
    """numba.njit with settings that keep results identical to the fallback."""
    import numba

    return numba.njit(func, cache=True, fastmath=False)
