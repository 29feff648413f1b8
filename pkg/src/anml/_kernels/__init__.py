"""Kernel backend selection.

The compiled Cython extension is preferred when it imported cleanly; the
pure-numpy fallback is used otherwise, or when ANML_PURE_PYTHON is set to a
non-empty value other than "0".  Both backends implement the same algorithms
with the same arithmetic, so results are identical either way.
"""

import os

from . import pyimpl

_force_python = os.environ.get("ANML_PURE_PYTHON", "") not in ("", "0")

if _force_python:
    _impl = pyimpl
    BACKEND = "python"
else:
    try:
        from . import _fast as _impl  # type: ignore[attr-defined]

        BACKEND = "compiled"
    except ImportError:
        _impl = pyimpl
        BACKEND = "python"

OPTIMAL = pyimpl.OPTIMAL
INFEASIBLE = pyimpl.INFEASIBLE
UNBOUNDED = pyimpl.UNBOUNDED
PIVOT_LIMIT = pyimpl.PIVOT_LIMIT

simplex_min = _impl.simplex_min
knn_vote = _impl.knn_vote


def backend_name():
    """Name of the active backend: "compiled" or "python"."""
    return BACKEND
