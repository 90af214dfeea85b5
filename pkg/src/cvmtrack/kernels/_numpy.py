"""Pure-numpy kernels, built directly on the reference model functions."""

from __future__ import annotations

import numpy as np

from .. import model
from ..errors import ConditioningError, DegenerateInputError
from . import STATUS_DEGENERATE, STATUS_INDEFINITE, STATUS_OK, STATUS_RX_NOT_PD


def node_terms(xm, xc, pm, pc, ch, cv, y, present):
    n = xm.shape[0]
    ux_mat = np.zeros((n, 4, 4))
    ux_vec = np.zeros((n, 4))
    up_mat = np.zeros((n, 3, 3))
    up_vec = np.zeros((n, 3))
    status = STATUS_OK
    for s in range(n):
        if not present[s]:
            continue
        kin = model.InfoEstimate(xm[s], np.linalg.inv(xc[s]), xc[s])
        ext = model.InfoEstimate(pm[s], np.linalg.inv(pc[s]), pc[s])
        noise = model.NoiseModel(ch, cv[s:s + 1])
        try:
            rx = model.kinematic_noise_moments(kin, ext, noise, 0)
            m = model.pseudo_measurement_matrix(kin, ext, noise)
        except DegenerateInputError:
            return ux_mat, ux_vec, up_mat, up_vec, STATUS_DEGENERATE
        except ConditioningError:
            return ux_mat, ux_vec, up_mat, up_vec, STATUS_RX_NOT_PD
        cy = model.measurement_residual_cov(kin, rx)
        try:
            vbar, rp = model.pseudo_noise_moments(m, ext, cy)
        except ConditioningError:
            return ux_mat, ux_vec, up_mat, up_vec, STATUS_INDEFINITE
        vx = np.linalg.inv(rx)
        ux_mat[s] = model.H.T @ vx @ model.H
        ux_vec[s] = model.H.T @ vx @ y[s]
        vp = np.linalg.inv(rp)
        y_tilde = model.pseudo_measurement(y[s], xm[s]) - vbar
        up_mat[s] = m.T @ vp @ m
        up_vec[s] = m.T @ vp @ y_tilde
    return ux_mat, ux_vec, up_mat, up_vec, status


def average_consensus(values, adjacency, xi, iterations):
    a = np.array(values, dtype=float, copy=True)
    adj = np.asarray(adjacency, dtype=float)
    deg = adj.sum(axis=1)
    for _ in range(int(iterations)):
        a = a + xi * (adj @ a - deg[:, None] * a)
    return a
