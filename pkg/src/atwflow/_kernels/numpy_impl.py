"""Array-arithmetic reference kernels (the pure-numpy backend)."""

import numpy as np

NAME = "numpy"


def _minplus_scan(row, cost):
    """In-place-style left-to-right relaxation row[j] <= row[j-1] + cost."""
    j = np.arange(row.shape[0])
    m = np.minimum.accumulate(row - cost * j)
    return np.minimum(row, m + cost * j)


def chamfer_fixpoint_2d(dist, offsets, weights, cap=16):
    """Gauss-Seidel shortest-path relaxation to a fixpoint, 4 raster orders.

    dist is modified in place; entries start at 0 on source cells and
    +inf elsewhere.  Returns the number of full rounds executed.
    """
    nx, ny = dist.shape
    cross = [(int(oi), int(oj), float(w)) for (oi, oj), w in zip(offsets, weights) if oi != 0]
    w_right = w_left = None
    for (oi, oj), w in zip(offsets, weights):
        if oi == 0 and oj == 1:
            w_right = float(w)
        if oi == 0 and oj == -1:
            w_left = float(w)
    for rounds in range(1, cap + 1):
        before = dist.copy()
        for si in (1, -1):
            for sj in (1, -1):
                rows = range(nx) if si == 1 else range(nx - 1, -1, -1)
                for i in rows:
                    row = dist[i]
                    for oi, oj, w in cross:
                        src = i - oi
                        if not 0 <= src < nx:
                            continue
                        cand = np.full(ny, np.inf)
                        if oj > 0:
                            cand[oj:] = dist[src, :ny - oj]
                        elif oj < 0:
                            cand[:oj] = dist[src, -oj:]
                        else:
                            cand[:] = dist[src]
                        row = np.minimum(row, cand + w)
                    if sj == 1:
                        if w_right is not None:
                            row = _minplus_scan(row, w_right)
                        if w_left is not None:
                            row = _minplus_scan(row[::-1], w_left)[::-1]
                    else:
                        if w_left is not None:
                            row = _minplus_scan(row[::-1], w_left)[::-1]
                        if w_right is not None:
                            row = _minplus_scan(row, w_right)
                    dist[i] = row
        if np.array_equal(before, dist):
            return rounds
    return cap


def chamfer_fixpoint_3d(dist, offsets, weights, cap=None):
    """Jacobi relaxation in 3D: whole-array shifts until nothing changes.

    Slower than a sweeping order (information moves a couple of cells per
    round) but fully vectorized; the numba backend is the fast path.
    """
    if cap is None:
        cap = 2 * sum(dist.shape)
    shape = dist.shape
    for rounds in range(1, cap + 1):
        before = dist.copy()
        for (o0, o1, o2), w in zip(offsets, weights):
            src = [slice(None)] * 3
            dst = [slice(None)] * 3
            ok = True
            for axis, o in enumerate((int(o0), int(o1), int(o2))):
                if o == 0:
                    continue
                if abs(o) >= shape[axis]:
                    ok = False
                    break
                if o > 0:
                    dst[axis] = slice(o, None)
                    src[axis] = slice(None, -o)
                else:
                    dst[axis] = slice(None, o)
                    src[axis] = slice(-o, None)
            if not ok:
                continue
            np.minimum(dist[tuple(dst)], before[tuple(src)] + w, out=dist[tuple(dst)])
        if np.array_equal(before, dist):
            return rounds
    return cap


def _grad(values, spacing):
    d = values.ndim
    out = np.zeros(values.shape + (d,))
    for a in range(d):
        lo = [slice(None)] * d
        hi = [slice(None)] * d
        lo[a] = slice(0, -1)
        hi[a] = slice(1, None)
        out[tuple(lo) + (a,)] = (values[tuple(hi)] - values[tuple(lo)]) / spacing[a]
    return out


def _div(vectors, spacing):
    d = vectors.shape[-1]
    out = np.zeros(vectors.shape[:-1])
    for a in range(d):
        comp = vectors[..., a]
        lo = [slice(None)] * d
        lo[a] = slice(0, -1)
        masked = np.zeros_like(comp)
        masked[tuple(lo)] = comp[tuple(lo)]
        shifted = np.zeros_like(comp)
        hi = [slice(None)] * d
        hi[a] = slice(1, None)
        shifted[tuple(hi)] = masked[tuple(lo)]
        out += (masked - shifted) / spacing[a]
    return out


def cp_chunk(w, wbar, zeta, d, spacing, h, tau, sigma, n_iters, proj_kind, proj_arg, frame=2):
    """Run n_iters accelerated primal-dual iterations in place.

    proj_kind: "euclid" | "l1" (proj_arg = per-axis weights) | "generic"
    (proj_arg = callable (points, radius) -> points).  The frame cells of
    w keep their Dirichlet value (w was initialized to d there).
    Returns the updated (tau, sigma).
    """
    dim = w.ndim
    interior = tuple(slice(frame, -frame) for _ in range(dim))
    for _ in range(n_iters):
        g = _grad(wbar, spacing)
        v = zeta + sigma * g
        if proj_kind == "euclid":
            nrm = np.sqrt((v * v).sum(axis=-1))
            scale = np.where(nrm > h, h / np.maximum(nrm, 1e-300), 1.0)
            zeta[...] = v * scale[..., None]
        elif proj_kind == "l1":
            for a in range(dim):
                np.clip(v[..., a], -h * proj_arg[a], h * proj_arg[a], out=zeta[..., a])
        else:
            flat = v.reshape(-1, dim)
            zeta[...] = proj_arg(flat, h).reshape(v.shape)
        w_old = w.copy()
        divz = _div(zeta, spacing)
        w[interior] = (w[interior] + tau * divz[interior] + tau * d[interior]) / (1.0 + tau)
        theta = 1.0 / np.sqrt(1.0 + 2.0 * tau)
        tau *= theta
        sigma /= theta
        wbar[...] = w + theta * (w - w_old)
    return tau, sigma
