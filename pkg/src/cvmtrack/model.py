"""Coupled velocity model (CVM) for elliptic / rectangular extended objects.

A measurement of node ``s`` is ``y = H x + S(v, p) h + e`` where ``x`` is the
kinematic state ``[px, py, vx, vy]``, ``p = (l1, l2, beta)`` is the extent with
semi-lengths and sideslip angle, ``h`` is a zero-mean multiplicative noise with
covariance ``C^h`` and ``e`` is Gaussian sensor noise. The coefficient matrix is
``S = R(alpha) diag(l1, l2)`` with orientation ``alpha = atan2(vy, vx) - beta``.

This module holds the reference (plain numpy) implementation of the model,
its first-order linearization and the two pseudo-linear measurement models
used by the WLS filters. The batched kernels in :mod:`cvmtrack.kernels` are
checked against these functions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from ._linalg import floor_eigenvalues, is_spd, spd_inv, symmetrize
from .errors import ConditioningError, DegenerateInputError

MIN_SPEED = 1e-6

H = np.hstack([np.eye(2), np.zeros((2, 2))])
# selects the velocity block of the kinematic state
G_VEL = np.hstack([np.zeros((2, 2)), np.eye(2)])


class KroneckerSelectors(NamedTuple):
    F: np.ndarray
    F_tilde: np.ndarray


SELECTORS = KroneckerSelectors(
    F=np.array([[1, 0, 0, 0], [0, 0, 0, 1], [0, 1, 0, 0]], dtype=float),
    F_tilde=np.array([[1, 0, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=float),
)
F_SEL = SELECTORS.F
F_TILDE = SELECTORS.F_tilde


def wrap_angle(a):
    """Wrap an angle (or array of angles) to (-pi, pi]."""
    w = np.mod(np.asarray(a, dtype=float) + np.pi, 2.0 * np.pi) - np.pi
    w = np.where(w == -np.pi, np.pi, w)
    return float(w) if np.ndim(w) == 0 else w


# ---------------------------------------------------------------------------
# domain types


@dataclass(frozen=True)
class KinematicState:
    position: np.ndarray
    velocity: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float).reshape(2))
        object.__setattr__(self, "velocity", np.asarray(self.velocity, dtype=float).reshape(2))

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.position, self.velocity])

    @classmethod
    def from_vector(cls, x) -> "KinematicState":
        x = np.asarray(x, dtype=float)
        return cls(x[:2], x[2:4])


@dataclass(frozen=True)
class ExtentState:
    semi_lengths: np.ndarray
    sideslip: float

    def __post_init__(self):
        lengths = np.asarray(self.semi_lengths, dtype=float).reshape(2)
        if np.any(lengths <= 0):
            raise ValueError(f"semi-lengths must be positive, got {lengths}")
        object.__setattr__(self, "semi_lengths", lengths)
        object.__setattr__(self, "sideslip", wrap_angle(self.sideslip))

    @property
    def vector(self) -> np.ndarray:
        return np.array([self.semi_lengths[0], self.semi_lengths[1], self.sideslip])

    @classmethod
    def from_vector(cls, p) -> "ExtentState":
        p = np.asarray(p, dtype=float)
        return cls(p[:2], p[2])


@dataclass(frozen=True)
class NoiseModel:
    """Multiplicative noise covariance plus per-node sensor noise covariances."""

    mult_cov: np.ndarray
    meas_cov: np.ndarray  # (n_nodes, 2, 2)

    def __post_init__(self):
        ch = np.asarray(self.mult_cov, dtype=float)
        cv = np.asarray(self.meas_cov, dtype=float)
        if cv.ndim == 2:
            cv = cv[None]
        if not is_spd(ch):
            raise ValueError("mult_cov must be SPD")
        for c in cv:
            if not is_spd(c):
                raise ValueError("every meas_cov must be SPD")
        object.__setattr__(self, "mult_cov", ch)
        object.__setattr__(self, "meas_cov", cv)

    @property
    def n_nodes(self) -> int:
        return self.meas_cov.shape[0]


@dataclass(frozen=True)
class DynamicsModel:
    kin_transition: np.ndarray
    ext_transition: np.ndarray
    kin_proc_cov: np.ndarray
    ext_proc_cov: np.ndarray
    scan_period: float

    @classmethod
    def nearly_constant_velocity(cls, scan_period, kin_proc_cov, ext_proc_cov) -> "DynamicsModel":
        T = float(scan_period)
        phi = np.eye(4)
        phi[0, 2] = phi[1, 3] = T
        return cls(phi, np.eye(3), np.asarray(kin_proc_cov, float),
                   np.asarray(ext_proc_cov, float), T)


@dataclass
class InfoEstimate:
    """A mean together with its information (inverse covariance) matrix."""

    mean: np.ndarray
    info: np.ndarray
    _cov: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float)
        self.info = symmetrize(np.asarray(self.info, dtype=float))

    @classmethod
    def from_covariance(cls, mean, cov) -> "InfoEstimate":
        cov = symmetrize(np.asarray(cov, dtype=float))
        return cls(mean, spd_inv(cov), cov)

    def covariance(self) -> np.ndarray:
        if self._cov is None:
            self._cov = spd_inv(self.info)
        return self._cov

    def copy(self) -> "InfoEstimate":
        return InfoEstimate(self.mean.copy(), self.info.copy(),
                            None if self._cov is None else self._cov.copy())


# ---------------------------------------------------------------------------
# coefficient matrix and derivatives


def _extent_vector(extent) -> np.ndarray:
    if isinstance(extent, ExtentState):
        return extent.vector
    return np.asarray(extent, dtype=float).reshape(3)


def _unit_velocity(velocity):
    v = np.asarray(velocity, dtype=float).reshape(2)
    speed = float(np.hypot(v[0], v[1]))
    if not speed >= MIN_SPEED:
        raise DegenerateInputError(f"speed {speed:.3e} m/s is below {MIN_SPEED} m/s")
    return v, speed


def _orientation_terms(velocity, beta):
    """cos/sin of alpha written in the velocity components, as used by S."""
    v, speed = _unit_velocity(velocity)
    cb, sb = np.cos(beta), np.sin(beta)
    c = (v[0] * cb + v[1] * sb) / speed
    s = (v[1] * cb - v[0] * sb) / speed
    return c, s


def coefficient_matrix(velocity, extent) -> np.ndarray:
    """S = R(alpha) diag(l1, l2) with alpha = atan2(vy, vx) - beta."""
    l1, l2, beta = _extent_vector(extent)
    c, s = _orientation_terms(velocity, beta)
    return np.array([[c * l1, -s * l2], [s * l1, c * l2]])


def velocity_partials(velocity):
    """Partial derivatives of the unit velocity vector.

    Returns ``(d1, d2, d3)`` = d(vx/|v|)/dvx, d(vy/|v|)/dvy and the shared
    mixed partial d(vx/|v|)/dvy = d(vy/|v|)/dvx.
    """
    v, speed = _unit_velocity(velocity)
    n3 = speed ** 3
    d1 = 1.0 / speed - v[0] ** 2 / n3
    d2 = 1.0 / speed - v[1] ** 2 / n3
    d3 = -v[0] * v[1] / n3
    return d1, d2, d3


def jacobians_extent(velocity, extent):
    """Jacobians of the rows of S with respect to ``(l1, l2, beta)``.

    Each Jacobian is 2x3: row ``j`` is the gradient of entry ``S[m, j]``.
    """
    l1, l2, beta = _extent_vector(extent)
    c, s = _orientation_terms(velocity, beta)
    j1 = np.array([[c, 0.0, l1 * s],
                   [0.0, -s, l2 * c]])
    j2 = np.array([[s, 0.0, -l1 * c],
                   [0.0, c, l2 * s]])
    return j1, j2


def jacobians_velocity(velocity, extent):
    """Jacobians of the rows of S with respect to ``(vx, vy)`` (each 2x2)."""
    l1, l2, beta = _extent_vector(extent)
    d1, d2, d3 = velocity_partials(velocity)
    cb, sb = np.cos(beta), np.sin(beta)
    j1 = np.array([[l1 * (d3 * sb + d1 * cb), l1 * (d2 * sb + d3 * cb)],
                   [l2 * (d1 * sb - d3 * cb), l2 * (d3 * sb - d2 * cb)]])
    j2 = np.array([[l1 * (d3 * cb - d1 * sb), l1 * (d2 * cb - d3 * sb)],
                   [l2 * (d3 * sb + d1 * cb), l2 * (d2 * sb + d3 * cb)]])
    return j1, j2


def _trace_moments(cov, jacs, mult_cov) -> np.ndarray:
    # [tr(cov J_m^T C^h J_n)]_{mn}
    out = np.empty((2, 2))
    for m in range(2):
        for n in range(2):
            out[m, n] = np.trace(cov @ jacs[m].T @ mult_cov @ jacs[n])
    return symmetrize(out)


def induced_noise_terms(prior_kin: InfoEstimate, prior_ext: InfoEstimate, mult_cov):
    """The three covariance terms induced by the multiplicative noise.

    Returns ``(C1, C2, C3)``: the term at the linearization point, the term
    driven by extent uncertainty and the term driven by velocity uncertainty.
    """
    ch = np.asarray(mult_cov, dtype=float)
    vel = prior_kin.mean[2:4]
    p = prior_ext.mean
    s_hat = coefficient_matrix(vel, p)
    c1 = symmetrize(s_hat @ ch @ s_hat.T)
    c2 = _trace_moments(prior_ext.covariance(), jacobians_extent(vel, p), ch)
    cov_vel = G_VEL @ prior_kin.covariance() @ G_VEL.T
    c3 = _trace_moments(cov_vel, jacobians_velocity(vel, p), ch)
    return c1, c2, c3


def kinematic_noise_moments(prior_kin: InfoEstimate, prior_ext: InfoEstimate,
                            noise: NoiseModel, node: int = 0) -> np.ndarray:
    """Covariance of the equivalent additive noise in ``y = H x + noise``."""
    c1, c2, c3 = induced_noise_terms(prior_kin, prior_ext, noise.mult_cov)
    rx = symmetrize(c1 + c2 + c3 + noise.meas_cov[node])
    if np.linalg.eigvalsh(rx)[0] <= 0.0:
        raise ConditioningError("equivalent kinematic noise covariance is not positive definite")
    return rx


def measurement_residual_cov(prior_kin: InfoEstimate, rx: np.ndarray) -> np.ndarray:
    """Covariance of ``y - H x_hat``: prior position covariance plus ``rx``."""
    return symmetrize(H @ prior_kin.covariance() @ H.T + np.asarray(rx, dtype=float))


def pseudo_measurement(y, x_hat) -> np.ndarray:
    """Quadratic residual products ``F (r kron r) = (r1^2, r2^2, r1 r2)``."""
    r = np.asarray(y, dtype=float) - H @ np.asarray(x_hat, dtype=float)
    return F_SEL @ np.kron(r, r)


def pseudo_measurement_cov(cy) -> np.ndarray:
    """Covariance of the pseudo-measurement for a Gaussian residual with covariance ``cy``."""
    cy = np.asarray(cy, dtype=float)
    return symmetrize(F_SEL @ np.kron(cy, cy) @ (F_SEL + F_TILDE).T)


def pseudo_measurement_matrix(prior_kin: InfoEstimate, prior_ext: InfoEstimate,
                              noise: NoiseModel) -> np.ndarray:
    """Linear map from the extent to the pseudo-measurement (3x3)."""
    ch = noise.mult_cov if isinstance(noise, NoiseModel) else np.asarray(noise, dtype=float)
    vel = prior_kin.mean[2:4]
    p = prior_ext.mean
    s_hat = coefficient_matrix(vel, p)
    j1, j2 = jacobians_extent(vel, p)
    s1, s2 = s_hat[0], s_hat[1]
    return np.vstack([
        2.0 * s1 @ ch @ j1,
        2.0 * s2 @ ch @ j2,
        s1 @ ch @ j2 + s2 @ ch @ j1,
    ])


def pseudo_noise_moments(m: np.ndarray, prior_ext: InfoEstimate, cy: np.ndarray):
    """Mean and (floored) covariance of the pseudo-linear extent model noise."""
    cy = np.asarray(cy, dtype=float)
    mean = F_SEL @ cy.reshape(-1, order="F") - m @ prior_ext.mean
    cov = pseudo_measurement_cov(cy) - m @ prior_ext.covariance() @ m.T
    return mean, floor_eigenvalues(cov)
