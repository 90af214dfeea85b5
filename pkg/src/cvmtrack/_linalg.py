"""Small dense linear-algebra helpers for SPD matrices."""

from __future__ import annotations

import numpy as np
from scipy import linalg as sla

from .errors import ConditioningError

PSD_FLOOR = 1e-12
# relative size of a negative eigenvalue tolerated before flooring becomes an error
INDEFINITE_RTOL = 1e-8


def symmetrize(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + np.swapaxes(a, -1, -2))


def floor_eigenvalues(a: np.ndarray, floor: float = PSD_FLOOR,
                      rtol: float = INDEFINITE_RTOL) -> np.ndarray:
    """Symmetrize ``a`` and clamp its eigenvalues from below at ``floor``.

    Raises ConditioningError when the most negative eigenvalue is larger in
    magnitude than ``rtol`` times the spectral radius.
    """
    a = symmetrize(np.asarray(a, dtype=float))
    w, q = np.linalg.eigh(a)
    scale = max(float(np.max(np.abs(w))), np.finfo(float).tiny)
    if w[0] < -rtol * scale:
        raise ConditioningError(
            f"matrix is indefinite (min eigenvalue {w[0]:.3e}, scale {scale:.3e})")
    if w[0] >= floor:
        return a
    w = np.maximum(w, floor)
    return symmetrize((q * w) @ q.T)


def spd_factor(a: np.ndarray):
    try:
        return sla.cho_factor(a, lower=True, check_finite=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise ConditioningError(f"matrix is not symmetric positive definite: {exc}") from exc


def spd_solve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return sla.cho_solve(spd_factor(a), b, check_finite=False)


def spd_inv(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    return symmetrize(spd_solve(a, np.eye(a.shape[0])))


def batched_spd_inverse(a: np.ndarray) -> np.ndarray:
    """Inverses of a stack ``(..., n, n)`` of SPD matrices via Cholesky."""
    a = symmetrize(np.asarray(a, dtype=float))
    try:
        low = np.linalg.cholesky(a)
    except np.linalg.LinAlgError as exc:
        raise ConditioningError(f"matrix is not symmetric positive definite: {exc}") from exc
    eye = np.broadcast_to(np.eye(a.shape[-1]), a.shape)
    linv = np.linalg.solve(low, eye)
    return np.swapaxes(linv, -1, -2) @ linv


def is_spd(a: np.ndarray) -> bool:
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or not np.all(np.isfinite(a)):
        return False
    if not np.allclose(a, a.T, rtol=1e-10, atol=1e-12):
        return False
    try:
        np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        return False
    return True
