"""Backend dispatch for the hot kernels.

The environment variable ``BPSLDA_BACKEND`` selects the implementation:
``numba`` (force JIT), ``numpy`` (force the pure-numpy fallback), or
``auto``/unset (numba when importable, numpy otherwise). The active choice
is exposed as ``BACKEND``.
"""

from __future__ import annotations

import os

_ENV_VAR = "BPSLDA_BACKEND"


def _select():
    choice = os.environ.get(_ENV_VAR, "auto").strip().lower() or "auto"
    if choice == "numpy":
        from . import _numpy as impl

        return impl, "numpy"
    if choice == "numba":
        from . import _numba as impl

        return impl, "numba"
    if choice == "auto":
        try:
            from . import _numba as impl

            return impl, "numba"
        except ImportError:
            from . import _numpy as impl

            return impl, "numpy"
    raise ValueError(f"{_ENV_VAR} must be 'numba', 'numpy', or 'auto', got {choice!r}")


_impl, BACKEND = _select()

THETA_FLOOR = _impl.THETA_FLOOR
PRODUCT_FLOOR = _impl.PRODUCT_FLOOR
mda_unroll = _impl.mda_unroll
backward_unroll = _impl.backward_unroll
grid_min_k2 = _impl.grid_min_k2
grid_min_k3 = _impl.grid_min_k3
