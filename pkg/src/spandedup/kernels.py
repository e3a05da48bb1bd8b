"""Hot inner loops, compiled with numba when it is importable.

Set ``SPANDEDUP_NO_NUMBA=1`` to force the pure-numpy implementations. Both
backends stay importable as ``numpy_impl`` / ``numba_impl`` so tests and the
benchmark can compare them directly.
"""

import os

from . import _kernels_numpy as numpy_impl

try:
    from . import _kernels_numba as numba_impl
except ImportError:  # numba is an optional extra
    numba_impl = None

USE_NUMBA = numba_impl is not None and os.environ.get(
    "SPANDEDUP_NO_NUMBA", ""
).lower() not in ("1", "true", "yes")

_impl = numba_impl if USE_NUMBA else numpy_impl

ones_complement_sum = _impl.ones_complement_sum
first_mismatch = _impl.first_mismatch
scan_window = _impl.scan_window
fifo_queue = _impl.fifo_queue

BACKEND = "numba" if USE_NUMBA else "numpy"
