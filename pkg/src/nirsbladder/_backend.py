"""Backend selection for the hot transport kernels.

``NIRSBLADDER_BACKEND=numpy`` forces the vectorised pure-numpy path; the
default is ``numba`` whenever numba imports cleanly.
"""
import os

ENV_VAR = "NIRSBLADDER_BACKEND"

try:
    import numba as _numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dependency in CI
    _numba = None
    HAVE_NUMBA = False


def requested_backend():
    name = os.environ.get(ENV_VAR, "numba").strip().lower()
    if name not in ("numba", "numpy"):
        raise ValueError(f"{ENV_VAR} must be 'numba' or 'numpy', got {name!r}")
    return name


def active_backend(override=None):
    """Name of the backend a simulation will run on."""
    name = override or requested_backend()
    if name == "numba" and not HAVE_NUMBA:
        return "numpy"
    return name


def njit(*args, **kwargs):
    """``numba.njit`` when available, otherwise an identity decorator."""
    if HAVE_NUMBA:
        return _numba.njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return lambda f: f
