"""Kernel backend selection.

The compiled extension is preferred when importable; the numpy fallback is
always available. `CAMO_KERNELS=python` forces the fallback, and
`CAMO_KERNELS=cython` makes a missing extension a hard error (useful in CI
for the compiled path).
"""

from __future__ import annotations

import os

from . import py_kernels

_requested = os.environ.get("CAMO_KERNELS", "auto").lower()

if _requested not in ("auto", "cython", "python"):
    raise ImportError(f"CAMO_KERNELS must be auto, cython, or python, not {_requested!r}")

if _requested == "python":
    impl = py_kernels
else:
    try:
        from . import _fast as impl  # type: ignore[no-redef]
    except ImportError:
        if _requested == "cython":
            raise
        impl = py_kernels

BACKEND = impl.BACKEND_NAME

relu_fwd = impl.relu_fwd
relu_bwd = impl.relu_bwd
softmax_xent_hard = impl.softmax_xent_hard
softmax_xent_soft = impl.softmax_xent_soft
row_l2norm_fwd = impl.row_l2norm_fwd
row_l2norm_bwd = impl.row_l2norm_bwd
supcon_core = impl.supcon_core
adam_step = impl.adam_step


def available_backends():
    names = ["python"]
    try:
        from . import _fast  # noqa: F401
    except ImportError:
        pass
    else:
        names.append("cython")
    return names
