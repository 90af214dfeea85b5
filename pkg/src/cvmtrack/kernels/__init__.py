"""Hot inner kernels with a numba path and a pure-numpy fallback.

The backend is picked once at import time from ``CVMTRACK_BACKEND``
(``numba`` or ``numpy``); numba is used when it is importable and the variable
is unset. Both backends expose the same two functions:

``node_terms(xm, xc, pm, pc, ch, cv, y, present)``
    Per-node WLS contributions for one sequential measurement index. Inputs
    are batched over nodes: prior kinematic means ``(N, 4)`` and covariances
    ``(N, 4, 4)``, prior extent means ``(N, 3)`` and covariances ``(N, 3, 3)``,
    the multiplicative noise covariance ``(2, 2)``, sensor covariances
    ``(N, 2, 2)``, measurements ``(N, 2)`` and a boolean presence mask.
    Returns ``(Ux, ux, Up, up, status)`` where absent nodes get zeros.

``average_consensus(values, adjacency, xi, iterations)``
    ``iterations`` rounds of neighbour averaging on the rows of ``values``.
"""

from __future__ import annotations

import os
from types import SimpleNamespace

import numpy as np

STATUS_OK = 0
STATUS_DEGENERATE = 1
STATUS_INDEFINITE = 2
STATUS_RX_NOT_PD = 3

ENV_FLAG = "CVMTRACK_BACKEND"


def load(name: str) -> SimpleNamespace:
    """Return the kernel namespace for backend ``name`` ("numba" or "numpy")."""
    if name == "numba":
        from . import _numba as mod
    elif name == "numpy":
        from . import _numpy as mod
    else:
        raise ValueError(f"unknown kernel backend {name!r}")
    return SimpleNamespace(name=name, node_terms=mod.node_terms,
                           average_consensus=mod.average_consensus)


def _default_backend() -> str:
    requested = os.environ.get(ENV_FLAG, "").strip().lower()
    if requested:
        return requested
    try:
        import numba  # noqa: F401
    except ImportError:
        return "numpy"
    return "numba"


_active = load(_default_backend())
BACKEND = _active.name


def node_terms(xm, xc, pm, pc, ch, cv, y, present):
    return _active.node_terms(
        np.ascontiguousarray(xm, dtype=float), np.ascontiguousarray(xc, dtype=float),
        np.ascontiguousarray(pm, dtype=float), np.ascontiguousarray(pc, dtype=float),
        np.ascontiguousarray(ch, dtype=float), np.ascontiguousarray(cv, dtype=float),
        np.ascontiguousarray(y, dtype=float), np.ascontiguousarray(present, dtype=np.bool_))


def average_consensus(values, adjacency, xi, iterations):
    return _active.average_consensus(
        np.ascontiguousarray(values, dtype=float), np.ascontiguousarray(adjacency, dtype=float),
        float(xi), int(iterations))
