"""Kernel backend selection.

The compiled extension ``_ckernels`` is used when it was built; otherwise,
or when ``EMOCLASS_PURE_PYTHON=1`` is set, the numpy implementations in
``_kernels_py`` are used. Both expose ``gini_scan`` and ``smo_solve``.
"""
from __future__ import annotations

import os

from . import _kernels_py

python_backend = _kernels_py

try:
    if os.environ.get("EMOCLASS_PURE_PYTHON") == "1":
        raise ImportError("pure-Python kernels requested")
    from . import _ckernels as compiled_backend
except ImportError:
    compiled_backend = None

backend = compiled_backend if compiled_backend is not None else python_backend
BACKEND_NAME = "cython" if backend is compiled_backend else "python"

gini_scan = backend.gini_scan
smo_solve = backend.smo_solve
