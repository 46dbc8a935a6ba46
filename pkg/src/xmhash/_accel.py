"""Backend switch for the hot kernels.

Set ``XMHASH_BACKEND=numpy`` (or ``XMHASH_DISABLE_NUMBA=1``) before import to
force the pure-numpy path. Without numba installed the numpy path is used
regardless.
"""

import os

try:
    import numba
    from numba import njit, prange

    HAVE_NUMBA = True
    # the TBB build shipped in some images is too old and warns on first use
    if "NUMBA_THREADING_LAYER" not in os.environ:
        numba.config.THREADING_LAYER = "workqueue"
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda f: f

    prange = range


def _env_wants_numpy():
    backend = os.environ.get("XMHASH_BACKEND", "").strip().lower()
    if backend == "numpy":
        return True
    return os.environ.get("XMHASH_DISABLE_NUMBA", "").strip() not in ("", "0", "false")


USE_NUMBA = HAVE_NUMBA and not _env_wants_numpy()


def backend_name():
    return "numba" if USE_NUMBA else "numpy"
