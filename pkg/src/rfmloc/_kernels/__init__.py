"""Backend selection for the hot dissimilarity kernel.

The compiled Cython extension is preferred when it was built; otherwise
the numpy implementation serves as a drop-in fallback. Set the
environment variable ``RFMLOC_BACKEND=numpy`` before import to force the
fallback (useful for benchmarking and debugging).
"""

from __future__ import annotations

import os

from rfmloc._kernels import numpy_backend

try:
    from rfmloc._kernels import _cdm as _compiled
except ImportError:
    _compiled = None

if _compiled is not None and os.environ.get("RFMLOC_BACKEND") != "numpy":
    _active = _compiled
    BACKEND = "cython"
else:
    _active = numpy_backend
    BACKEND = "numpy"

cdm_batch = _active.cdm_batch


def available_backends() -> dict:
    """Mapping of backend name to its cdm_batch implementation."""
    out = {"numpy": numpy_backend.cdm_batch}
    if _compiled is not None:
        out["cython"] = _compiled.cdm_batch
    return out
