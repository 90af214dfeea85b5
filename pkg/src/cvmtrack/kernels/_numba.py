"""numba-compiled kernels; same contracts as the numpy fallback."""

from __future__ import annotations

import numpy as np
from numba import njit

from .._linalg import INDEFINITE_RTOL, PSD_FLOOR
from ..model import MIN_SPEED
from . import STATUS_DEGENERATE, STATUS_INDEFINITE, STATUS_OK, STATUS_RX_NOT_PD


@njit(cache=True)
def _trace_moments(cov, j1, j2, ch):
    out = np.empty((2, 2))
    a11 = j1.T @ ch @ j1
    a12 = j1.T @ ch @ j2
    a22 = j2.T @ ch @ j2
    out[0, 0] = np.sum(cov * a11.T)
    out[1, 1] = np.sum(cov * a22.T)
    # tr(C A12) and tr(C A12^T) agree for symmetric C; average to stay symmetric
    off = 0.5 * (np.sum(cov * a12.T) + np.sum(cov * a12))
    out[0, 1] = off
    out[1, 0] = off
    return out


@njit(cache=True)
def _node(xm, xc, pm, pc, ch, cv, y, ux_mat, ux_vec, up_mat, up_vec):
    vx = xm[2]
    vy = xm[3]
    speed = np.sqrt(vx * vx + vy * vy)
    if not speed >= MIN_SPEED:
        return STATUS_DEGENERATE
    l1 = pm[0]
    l2 = pm[1]
    cb = np.cos(pm[2])
    sb = np.sin(pm[2])
    c = (vx * cb + vy * sb) / speed
    s = (vy * cb - vx * sb) / speed

    s_hat = np.empty((2, 2))
    s_hat[0, 0] = c * l1
    s_hat[0, 1] = -s * l2
    s_hat[1, 0] = s * l1
    s_hat[1, 1] = c * l2

    j1p = np.zeros((2, 3))
    j1p[0, 0] = c
    j1p[0, 2] = l1 * s
    j1p[1, 1] = -s
    j1p[1, 2] = l2 * c
    j2p = np.zeros((2, 3))
    j2p[0, 0] = s
    j2p[0, 2] = -l1 * c
    j2p[1, 1] = c
    j2p[1, 2] = l2 * s

    n3 = speed * speed * speed
    d1 = 1.0 / speed - vx * vx / n3
    d2 = 1.0 / speed - vy * vy / n3
    d3 = -vx * vy / n3
    j1v = np.empty((2, 2))
    j1v[0, 0] = l1 * (d3 * sb + d1 * cb)
    j1v[0, 1] = l1 * (d2 * sb + d3 * cb)
    j1v[1, 0] = l2 * (d1 * sb - d3 * cb)
    j1v[1, 1] = l2 * (d3 * sb - d2 * cb)
    j2v = np.empty((2, 2))
    j2v[0, 0] = l1 * (d3 * cb - d1 * sb)
    j2v[0, 1] = l1 * (d2 * cb - d3 * sb)
    j2v[1, 0] = l2 * (d3 * sb + d1 * cb)
    j2v[1, 1] = l2 * (d2 * sb + d3 * cb)

    c1 = s_hat @ ch @ s_hat.T
    c2 = _trace_moments(np.ascontiguousarray(pc), j1p, j2p, ch)
    c3 = _trace_moments(np.ascontiguousarray(xc[2:4, 2:4]), j1v, j2v, ch)
    rx = c1 + c2 + c3 + cv
    rx = 0.5 * (rx + rx.T)
    det = rx[0, 0] * rx[1, 1] - rx[0, 1] * rx[1, 0]
    if not (rx[0, 0] > 0.0 and det > 0.0):
        return STATUS_RX_NOT_PD
    vinv = np.empty((2, 2))
    vinv[0, 0] = rx[1, 1] / det
    vinv[1, 1] = rx[0, 0] / det
    vinv[0, 1] = -rx[0, 1] / det
    vinv[1, 0] = -rx[1, 0] / det

    cy = rx + 0.5 * (xc[0:2, 0:2] + xc[0:2, 0:2].T)

    m = np.empty((3, 3))
    s1 = np.ascontiguousarray(s_hat[0:1, :])
    s2 = np.ascontiguousarray(s_hat[1:2, :])
    m[0, :] = (2.0 * (s1 @ ch @ j1p))[0]
    m[1, :] = (2.0 * (s2 @ ch @ j2p))[0]
    m[2, :] = (s1 @ ch @ j2p + s2 @ ch @ j1p)[0]

    a = cy[0, 0]
    b = 0.5 * (cy[0, 1] + cy[1, 0])
    d = cy[1, 1]
    pcov = np.empty((3, 3))
    pcov[0, 0] = 2.0 * a * a
    pcov[1, 1] = 2.0 * d * d
    pcov[2, 2] = a * d + b * b
    pcov[0, 1] = pcov[1, 0] = 2.0 * b * b
    pcov[0, 2] = pcov[2, 0] = 2.0 * a * b
    pcov[1, 2] = pcov[2, 1] = 2.0 * d * b

    rp = pcov - m @ pc @ m.T
    rp = 0.5 * (rp + rp.T)
    w, q = np.linalg.eigh(rp)
    scale = max(np.max(np.abs(w)), 1e-300)
    if w[0] < -INDEFINITE_RTOL * scale:
        return STATUS_INDEFINITE
    for k in range(3):
        if w[k] < PSD_FLOOR:
            w[k] = PSD_FLOOR
    vp = (q / w) @ q.T

    mean_y = np.empty(3)
    mean_y[0] = a
    mean_y[1] = d
    mean_y[2] = b
    vbar = mean_y - m @ pm
    r0 = y[0] - xm[0]
    r1 = y[1] - xm[1]
    y_tilde = np.empty(3)
    y_tilde[0] = r0 * r0 - vbar[0]
    y_tilde[1] = r1 * r1 - vbar[1]
    y_tilde[2] = r0 * r1 - vbar[2]

    for i in range(2):
        for j in range(2):
            ux_mat[i, j] = vinv[i, j]
        ux_vec[i] = vinv[i, 0] * y[0] + vinv[i, 1] * y[1]
    mtv = m.T @ vp
    up_mat[:, :] = mtv @ m
    up_vec[:] = mtv @ y_tilde
    return STATUS_OK


@njit(cache=True)
def node_terms(xm, xc, pm, pc, ch, cv, y, present):
    n = xm.shape[0]
    ux_mat = np.zeros((n, 4, 4))
    ux_vec = np.zeros((n, 4))
    up_mat = np.zeros((n, 3, 3))
    up_vec = np.zeros((n, 3))
    for s in range(n):
        if not present[s]:
            continue
        status = _node(xm[s], xc[s], pm[s], pc[s], ch, cv[s], y[s],
                       ux_mat[s], ux_vec[s], up_mat[s], up_vec[s])
        if status != STATUS_OK:
            return ux_mat, ux_vec, up_mat, up_vec, status
    return ux_mat, ux_vec, up_mat, up_vec, STATUS_OK


@njit(cache=True)
def average_consensus(values, adjacency, xi, iterations):
    n, dim = values.shape
    # neighbour lists in CSR form, in ascending node order
    ptr = np.zeros(n + 1, dtype=np.int64)
    for s in range(n):
        ptr[s + 1] = ptr[s]
        for j in range(n):
            if adjacency[s, j] != 0.0:
                ptr[s + 1] += 1
    nbr = np.empty(ptr[n], dtype=np.int64)
    for s in range(n):
        c = ptr[s]
        for j in range(n):
            if adjacency[s, j] != 0.0:
                nbr[c] = j
                c += 1
    a = values.copy()
    nxt = np.empty_like(a)
    for _ in range(iterations):
        for s in range(n):
            for k in range(dim):
                acc = 0.0
                for c in range(ptr[s], ptr[s + 1]):
                    acc += a[nbr[c], k] - a[s, k]
                nxt[s, k] = a[s, k] + xi * acc
        a, nxt = nxt, a
    return a
