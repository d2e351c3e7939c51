"""Process-wide switches read from the environment.

PRECURSOR_DISABLE_NUMBA=1   use the pure-numpy kernels even when numba imports
PRECURSOR_THREADS=N         default worker count for forests, grids and OvR fits
"""
import os


def _truthy(value):
    return value.strip().lower() in ("1", "true", "yes", "on")


def numba_requested():
    return not _truthy(os.environ.get("PRECURSOR_DISABLE_NUMBA", ""))


def default_threads():
    raw = os.environ.get("PRECURSOR_THREADS", "").strip()
    if not raw:
        return 1
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"PRECURSOR_THREADS must be an integer, got {raw!r}")
    return max(1, n)
