"""Optional numba acceleration.

Hot kernels are written as plain Python loops over numpy arrays and
compiled with ``numba.njit`` when numba is importable.  The environment
flag ``CURBFLOW_NUMBA=0`` selects the pure-numpy fallbacks instead; the
choice can also be flipped at runtime with :func:`set_backend` (used by the
benchmark to time both paths in one process).
"""
import os

try:
    import numba
    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAS_NUMBA = False


def _flag_enabled():
    flag = os.environ.get("CURBFLOW_NUMBA", "1").strip().lower()
    return flag not in ("0", "false", "no", "off")


_state = {"numba": HAS_NUMBA and _flag_enabled()}


def use_numba():
    return _state["numba"]


def set_backend(name):
    """Select ``"numba"`` or ``"numpy"`` for subsequent kernel calls."""
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not HAS_NUMBA:
        raise RuntimeError("numba is not installed")
    _state["numba"] = name == "numba"


def backend_name():
    return "numba" if _state["numba"] else "numpy"


def jit(fn):
    """Compiled twin of ``fn`` (or ``fn`` itself when numba is missing)."""
    if HAS_NUMBA:
        return numba.njit(cache=True)(fn)
    return fn  # pragma: no cover
