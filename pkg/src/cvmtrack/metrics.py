"""Tracking error metrics: GWD, boundary-point OSPA and ACEE."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from ._linalg import symmetrize
from .errors import ConfigurationError

OSPA_POINTS = 20
OSPA_CUTOFF = 10.0
OSPA_ORDER = 2


@dataclass(frozen=True)
class EllipticExtentSummary:
    center: np.ndarray
    shape_matrix: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float).reshape(2))
        shape = symmetrize(np.asarray(self.shape_matrix, dtype=float).reshape(2, 2))
        # a collapsed axis is a valid (degenerate) estimate; only reject garbage
        if not np.all(np.isfinite(shape)) or np.linalg.eigvalsh(shape)[0] < -1e-9 * max(1.0, np.abs(shape).max()):
            raise ValueError("shape matrix must be finite and positive semi-definite")
        object.__setattr__(self, "shape_matrix", shape)

    @classmethod
    def from_state(cls, kin, ext) -> "EllipticExtentSummary":
        """Summary of a kinematic vector ``[px, py, vx, vy]`` and extent ``(l1, l2, beta)``."""
        kin = np.asarray(kin, dtype=float)
        ext = np.asarray(ext, dtype=float)
        alpha = np.arctan2(kin[3], kin[2]) - ext[2]
        return cls(kin[:2], shape_matrix(alpha, ext[0], ext[1]))

    def axes(self):
        """Recover ``(alpha, l1, l2)`` with ``l1 >= l2``; alpha modulo pi."""
        w, q = np.linalg.eigh(self.shape_matrix)
        alpha = float(np.arctan2(q[1, 1], q[0, 1]))
        return alpha, float(np.sqrt(w[1])), float(np.sqrt(w[0]))


def rotation(alpha: float) -> np.ndarray:
    c, s = np.cos(alpha), np.sin(alpha)
    return np.array([[c, -s], [s, c]])


def shape_matrix(alpha: float, l1: float, l2: float) -> np.ndarray:
    r = rotation(alpha)
    return r @ np.diag([l1 * l1, l2 * l2]) @ r.T


def _sqrtm_spd(a: np.ndarray) -> np.ndarray:
    w, q = np.linalg.eigh(symmetrize(a))
    return (q * np.sqrt(np.clip(w, 0.0, None))) @ q.T


def gwd(a: EllipticExtentSummary, b: EllipticExtentSummary) -> float:
    """Gaussian Wasserstein (2-Wasserstein) distance between two summaries."""
    sa = _sqrtm_spd(a.shape_matrix)
    cross = _sqrtm_spd(sa @ b.shape_matrix @ sa)
    trace_term = np.trace(a.shape_matrix + b.shape_matrix - 2.0 * cross)
    d2 = float(np.sum((a.center - b.center) ** 2) + max(trace_term, 0.0))
    return float(np.sqrt(d2))


def boundary_points(center, semi_lengths, orientation: float, shape: str,
                    n: int = OSPA_POINTS) -> np.ndarray:
    """``n`` points on the object's boundary at uniform parameter spacing."""
    t = np.arange(n) / n
    if shape == "ellipse":
        phi = 2.0 * np.pi * t
        unit = np.column_stack([np.cos(phi), np.sin(phi)])
    elif shape == "rectangle":
        # perimeter of [-1, 1]^2 traversed counter-clockwise from (1, -1)
        u = 4.0 * t
        side = np.floor(u).astype(int)
        f = 2.0 * (u - side) - 1.0
        unit = np.empty((n, 2))
        unit[side == 0] = np.column_stack([np.ones_like(f), f])[side == 0]
        unit[side == 1] = np.column_stack([-f, np.ones_like(f)])[side == 1]
        unit[side == 2] = np.column_stack([-np.ones_like(f), -f])[side == 2]
        unit[side == 3] = np.column_stack([f, -np.ones_like(f)])[side == 3]
    else:
        raise ConfigurationError(f"unknown shape {shape!r}")
    lengths = np.abs(np.asarray(semi_lengths, dtype=float))
    s = rotation(orientation) @ np.diag(lengths)
    return np.asarray(center, dtype=float)[None, :] + unit @ s.T


def ospa_points(x: np.ndarray, y: np.ndarray, cutoff: float = OSPA_CUTOFF,
                order: float = OSPA_ORDER) -> float:
    """OSPA distance between two finite point sets (rows are points)."""
    if cutoff <= 0 or order < 1:
        raise ValueError("cutoff must be > 0 and order >= 1")
    m, n = len(x), len(y)
    if m == 0 and n == 0:
        return 0.0
    if m == 0 or n == 0:
        return float(cutoff)
    d = np.linalg.norm(x[:, None, :] - y[None, :, :], axis=-1)
    cost = np.minimum(d, cutoff) ** order
    rows, cols = linear_sum_assignment(cost)
    total = cost[rows, cols].sum() + cutoff ** order * abs(m - n)
    return float((total / max(m, n)) ** (1.0 / order))


def ospa(estimate, truth, shape: str, cutoff: float = OSPA_CUTOFF,
         order: float = OSPA_ORDER, n_points: int = OSPA_POINTS) -> float:
    """OSPA between boundary samples of two objects.

    ``estimate`` and ``truth`` are ``(kin, ext)`` pairs of state vectors.
    """
    pts = []
    for kin, ext in (estimate, truth):
        kin = np.asarray(kin, dtype=float)
        ext = np.asarray(ext, dtype=float)
        alpha = np.arctan2(kin[3], kin[2]) - ext[2]
        pts.append(boundary_points(kin[:2], ext[:2], alpha, shape, n_points))
    return ospa_points(pts[0], pts[1], cutoff, order)


def acee(node_estimates) -> float:
    """Mean distance of the node estimates from their across-node average."""
    x = np.asarray(node_estimates, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] < 2:
        raise ValueError("ACEE needs at least two nodes")
    dev = x - x.mean(axis=0, keepdims=True)
    return float(np.mean(np.linalg.norm(dev, axis=1)))


def nees(error, info) -> float:
    """Normalized estimation error squared ``e^T Omega e``."""
    e = np.asarray(error, dtype=float)
    return float(e @ np.asarray(info, dtype=float) @ e)
