"""Numba-compiled kernels (the fast backend).

The fused primal-dual chunk covers the two projection kinds that appear
in the hot scenarios (euclidean and weighted-l1); everything else falls
back to the numpy implementation, which accepts arbitrary projection
callables.
"""

import numpy as np
from numba import njit, prange

from . import numpy_impl

NAME = "numba"


@njit(cache=True)
def _chamfer_2d(dist, offs, wts, cap):
    nx, ny = dist.shape
    m = offs.shape[0]
    for r in range(cap):
        changed = False
        for order in range(4):
            si = 1 if order < 2 else -1
            sj = 1 if order % 2 == 0 else -1
            i = 0 if si == 1 else nx - 1
            while 0 <= i < nx:
                j = 0 if sj == 1 else ny - 1
                while 0 <= j < ny:
                    best = dist[i, j]
                    for k in range(m):
                        pi = i - offs[k, 0]
                        pj = j - offs[k, 1]
                        if 0 <= pi < nx and 0 <= pj < ny:
                            cand = dist[pi, pj] + wts[k]
                            if cand < best:
                                best = cand
                    if best < dist[i, j]:
                        dist[i, j] = best
                        changed = True
                    j += sj
                i += si
        if not changed:
            return r + 1
    return cap


@njit(cache=True)
def _chamfer_3d(dist, offs, wts, cap):
    nx, ny, nz = dist.shape
    m = offs.shape[0]
    for r in range(cap):
        changed = False
        for order in range(8):
            si = 1 if order & 4 == 0 else -1
            sj = 1 if order & 2 == 0 else -1
            sk = 1 if order & 1 == 0 else -1
            i = 0 if si == 1 else nx - 1
            while 0 <= i < nx:
                j = 0 if sj == 1 else ny - 1
                while 0 <= j < ny:
                    k = 0 if sk == 1 else nz - 1
                    while 0 <= k < nz:
                        best = dist[i, j, k]
                        for t in range(m):
                            pi = i - offs[t, 0]
                            pj = j - offs[t, 1]
                            pk = k - offs[t, 2]
                            if 0 <= pi < nx and 0 <= pj < ny and 0 <= pk < nz:
                                cand = dist[pi, pj, pk] + wts[t]
                                if cand < best:
                                    best = cand
                        if best < dist[i, j, k]:
                            dist[i, j, k] = best
                            changed = True
                        k += sk
                    j += sj
                i += si
        if not changed:
            return r + 1
    return cap


def chamfer_fixpoint_2d(dist, offsets, weights, cap=16):
    offs = np.ascontiguousarray(offsets, dtype=np.int64)
    wts = np.ascontiguousarray(weights, dtype=np.float64)
    return int(_chamfer_2d(dist, offs, wts, cap))


def chamfer_fixpoint_3d(dist, offsets, weights, cap=None):
    if cap is None:
        cap = 16
    offs = np.ascontiguousarray(offsets, dtype=np.int64)
    wts = np.ascontiguousarray(weights, dtype=np.float64)
    return int(_chamfer_3d(dist, offs, wts, cap))


@njit(cache=True, parallel=True)
def _cp_iters_2d(w, wbar, wold, zeta, d, sx, sy, h, tau, sigma, n_iters, kind, w0, w1, frame):
    nx, ny = w.shape
    for _ in range(n_iters):
        for i in prange(nx):
            for j in range(ny):
                gx = (wbar[i + 1, j] - wbar[i, j]) / sx if i < nx - 1 else 0.0
                gy = (wbar[i, j + 1] - wbar[i, j]) / sy if j < ny - 1 else 0.0
                vx = zeta[i, j, 0] + sigma * gx
                vy = zeta[i, j, 1] + sigma * gy
                if kind == 0:
                    nrm = np.sqrt(vx * vx + vy * vy)
                    if nrm > h:
                        s = h / max(nrm, 1e-300)
                        vx = vx * s
                        vy = vy * s
                else:
                    bx = h * w0
                    by = h * w1
                    if vx > bx:
                        vx = bx
                    elif vx < -bx:
                        vx = -bx
                    if vy > by:
                        vy = by
                    elif vy < -by:
                        vy = -by
                zeta[i, j, 0] = vx
                zeta[i, j, 1] = vy
        for i in prange(nx):
            for j in range(ny):
                wold[i, j] = w[i, j]
        for i in prange(frame, nx - frame):
            for j in range(frame, ny - frame):
                divz = (zeta[i, j, 0] - zeta[i - 1, j, 0]) / sx + (
                    zeta[i, j, 1] - zeta[i, j - 1, 1]
                ) / sy
                w[i, j] = (w[i, j] + tau * divz + tau * d[i, j]) / (1.0 + tau)
        theta = 1.0 / np.sqrt(1.0 + 2.0 * tau)
        tau = tau * theta
        sigma = sigma / theta
        for i in prange(nx):
            for j in range(ny):
                wbar[i, j] = w[i, j] + theta * (w[i, j] - wold[i, j])
    return tau, sigma


def cp_chunk(w, wbar, zeta, d, spacing, h, tau, sigma, n_iters, proj_kind, proj_arg, frame=2):
    """Same contract as numpy_impl.cp_chunk; fused fast path in 2D."""
    if w.ndim == 2 and proj_kind in ("euclid", "l1"):
        kind = 0 if proj_kind == "euclid" else 1
        w0 = float(proj_arg[0]) if proj_kind == "l1" else 1.0
        w1 = float(proj_arg[1]) if proj_kind == "l1" else 1.0
        wold = np.empty_like(w)
        tau, sigma = _cp_iters_2d(
            w, wbar, wold, zeta, d,
            float(spacing[0]), float(spacing[1]),
            float(h), float(tau), float(sigma), int(n_iters), kind, w0, w1, int(frame),
        )
        return float(tau), float(sigma)
    return numpy_impl.cp_chunk(
        w, wbar, zeta, d, spacing, h, tau, sigma, n_iters, proj_kind, proj_arg, frame
    )
