"""Switch between numba-compiled kernels and the pure numpy path.

Set ``HYBRID_AFEM_NUMBA=0`` in the environment before import to force the
numpy implementations (useful for debugging or when numba is unavailable).
"""
import os

try:
    import numba
    HAS_NUMBA = True
except ImportError:  # pragma: no cover
    numba = None
    HAS_NUMBA = False

USE_NUMBA = HAS_NUMBA and os.environ.get("HYBRID_AFEM_NUMBA", "1").lower() not in (
    "0", "false", "no", "off")

numba_kwargs = {
    "nopython": True,
    "cache": True,
    "fastmath": False,
    "nogil": True,
}


def njit(func):
    """Compile ``func`` with numba when available, else return it unchanged."""
    if HAS_NUMBA:
        return numba.jit(**numba_kwargs)(func)
    return func  # pragma: no cover
