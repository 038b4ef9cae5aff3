"""Kernel backend selection.

Two interchangeable lanes exist:

* ``numba_backend``: loop kernels compiled with ``@njit(cache=True)``.
* ``numpy_backend``: vectorized numpy, no compilation, always available.

The env var ``TRIVQA_KERNELS`` picks the lane at import time:

* ``auto`` (default): numba if importable, else numpy
* ``numba``: require numba, fail if missing
* ``numpy``: force the fallback

Both backend modules stay importable directly so tests and benchmarks
can compare them regardless of the active choice.
"""

import os

from ..errors import ConfigError

_choice = os.environ.get("TRIVQA_KERNELS", "auto").strip().lower()
if _choice not in ("auto", "numba", "numpy"):
    raise ConfigError(
        f"TRIVQA_KERNELS must be one of auto, numba, numpy; got {_choice!r}"
    )

if _choice == "numpy":
    from . import numpy_backend as _active

    BACKEND = "numpy"
elif _choice == "numba":
    try:
        from . import numba_backend as _active
    except ImportError as exc:
        raise ConfigError(
            "TRIVQA_KERNELS=numba but the numba backend failed to import: "
            f"{exc}"
        ) from exc
    BACKEND = "numba"
else:
    try:
        from . import numba_backend as _active

        BACKEND = "numba"
    except ImportError:
        from . import numpy_backend as _active

        BACKEND = "numpy"

relu_fwd = _active.relu_fwd
relu_bwd = _active.relu_bwd
softmax_rows_fwd = _active.softmax_rows_fwd
softmax_rows_bwd = _active.softmax_rows_bwd
ce_fwd = _active.ce_fwd
ce_bwd = _active.ce_bwd
soft_ce_fwd = _active.soft_ce_fwd
soft_ce_bwd = _active.soft_ce_bwd
sq_diff_sum = _active.sq_diff_sum
sq_diff_bwd = _active.sq_diff_bwd
add_rowvec = _active.add_rowvec
sum_rows = _active.sum_rows
sgd_update = _active.sgd_update

__all__ = [
    "BACKEND",
    "relu_fwd",
    "relu_bwd",
    "softmax_rows_fwd",
    "softmax_rows_bwd",
    "ce_fwd",
    "ce_bwd",
    "soft_ce_fwd",
    "soft_ce_bwd",
    "sq_diff_sum",
    "sq_diff_bwd",
    "add_rowvec",
    "sum_rows",
    "sgd_update",
]
