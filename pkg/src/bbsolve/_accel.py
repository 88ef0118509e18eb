"""Numba acceleration toggle.

Hot numeric kernels (Fock-state evolution, permanents, the sequential
sampler, cost evaluation, and the baseline search loops) are compiled with
numba by default. Setting the environment variable ``BBS_NO_NUMBA=1``
selects the pure-numpy fallback paths instead; results are identical up to
floating-point rounding, only slower. The flag is read once at import time.
"""

import os

try:
    import numba as _numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    _numba = None

_flag = os.environ.get("BBS_NO_NUMBA", "0").strip().lower()
NUMBA_ENABLED = _numba is not None and _flag in ("", "0", "false", "no")


def maybe_njit(*jit_args, **jit_kwargs):
    """Return ``numba.njit`` when acceleration is on, identity otherwise.

    Usable both bare (``@maybe_njit``) and with options
    (``@maybe_njit(cache=True)``).
    """
    if jit_args and callable(jit_args[0]) and not jit_kwargs:
        func = jit_args[0]
        if NUMBA_ENABLED:
            return _numba.njit(cache=True)(func)
        return func

    def decorate(func):
        if NUMBA_ENABLED:
            return _numba.njit(*jit_args, **jit_kwargs)(func)
        return func

    return decorate
