"""Convex one-homogeneous gauges with duals, subgradients and dual-ball projections.

A gauge here is any convex, positively one-homogeneous function that is
positive away from the origin; symmetry is not assumed.  Each instance
knows how to evaluate itself, evaluate its polar, select a subgradient
deterministically, and project points onto sublevel sets of the polar
(the constraint set of the primal-dual perimeter solver).

Supported kinds: euclidean, weighted-l1, l-infinity, p-norm, ellipse,
polyhedral (gauge given by support directions), shifted (non-symmetric
translate of a euclidean or polyhedral body).  Duals of shifted gauges
are represented by an internal "polar" wrapper.
"""

from __future__ import annotations

import numpy as np

try:
    from scipy.spatial import ConvexHull
except ImportError:  # pragma: no cover
    ConvexHull = None

_BISECT_ITERS = 80


def _as_points(x, dim):
    """Coerce to (n, dim) float array; returns (array, was_single_vector)."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 1:
        if arr.shape[0] != dim:
            raise ValueError(f"dimension mismatch: expected {dim}-vectors, got shape {arr.shape}")
        return arr[None, :], True
    if arr.ndim != 2 or arr.shape[1] != dim:
        raise ValueError(f"dimension mismatch: expected (n, {dim}) array, got shape {arr.shape}")
    return arr, False


def _lex_smallest(rows):
    """Lexicographically smallest row of a (k, d) array."""
    order = np.lexsort(rows.T[::-1])
    return rows[order[0]].copy()


def _project_weighted_l1_ball(Y, inv_weights, radius):
    """Euclidean projection of rows of Y onto {z : sum_i |z_i|*inv_weights[i] <= radius}."""
    A = np.abs(Y)
    feas = A @ inv_weights <= radius
    out = Y.copy()
    bad = ~feas
    if not np.any(bad):
        return out
    Ab = A[bad]
    lo = np.zeros(Ab.shape[0])
    hi = np.max(Ab / inv_weights[None, :], axis=1)
    for _ in range(_BISECT_ITERS):
        mid = 0.5 * (lo + hi)
        s = np.maximum(Ab - mid[:, None] * inv_weights[None, :], 0.0) @ inv_weights
        too_big = s > radius
        lo = np.where(too_big, mid, lo)
        hi = np.where(too_big, hi, mid)
    lam = 0.5 * (lo + hi)
    Zb = np.sign(Y[bad]) * np.maximum(Ab - lam[:, None] * inv_weights[None, :], 0.0)
    out[bad] = Zb
    return out


def _project_ellipsoid(Y, Q, lam, center, rhs):
    """Project rows of Y onto {y : (y-c)^T Q diag(lam) Q^T (y-c) <= rhs}."""
    U = (Y - center[None, :]) @ Q
    val = (U * U) @ lam
    out = Y.copy()
    bad = val > rhs
    if not np.any(bad):
        return out
    Ub = U[bad]
    # secular equation: f(mu) = sum lam_i u_i^2 / (1 + mu lam_i)^2 = rhs, f decreasing
    lo = np.zeros(Ub.shape[0])
    hi = np.ones(Ub.shape[0])
    for _ in range(200):
        f = ((Ub / (1.0 + hi[:, None] * lam[None, :])) ** 2) @ lam
        if np.all(f <= rhs):
            break
        hi = np.where(f > rhs, 2.0 * hi, hi)
    for _ in range(_BISECT_ITERS):
        mid = 0.5 * (lo + hi)
        f = ((Ub / (1.0 + mid[:, None] * lam[None, :])) ** 2) @ lam
        too_big = f > rhs
        lo = np.where(too_big, mid, lo)
        hi = np.where(too_big, hi, mid)
    mu = 0.5 * (lo + hi)
    Zb = Ub / (1.0 + mu[:, None] * lam[None, :])
    out[bad] = Zb @ Q.T + center[None, :]
    return out


def _project_q_ball(Y, q, radius):
    """Project rows of Y onto the q-norm ball of given radius (1 < q < inf)."""
    A = np.abs(Y)
    norms = (A ** q).sum(axis=1) ** (1.0 / q)
    out = Y.copy()
    bad = norms > radius
    if not np.any(bad):
        return out
    Ab = A[bad]

    def magnitudes(mu):
        # per-row, per-coordinate solve of b + mu*b^(q-1) = a on [0, a]
        lo = np.zeros_like(Ab)
        hi = Ab.copy()
        for _ in range(_BISECT_ITERS):
            mid = 0.5 * (lo + hi)
            g = mid + mu[:, None] * mid ** (q - 1.0) - Ab
            lo = np.where(g < 0.0, mid, lo)
            hi = np.where(g < 0.0, hi, mid)
        return 0.5 * (lo + hi)

    lo = np.zeros(Ab.shape[0])
    hi = np.ones(Ab.shape[0])
    for _ in range(200):
        nr = (magnitudes(hi) ** q).sum(axis=1) ** (1.0 / q)
        if np.all(nr <= radius):
            break
        hi = np.where(nr > radius, 2.0 * hi, hi)
    for _ in range(_BISECT_ITERS):
        mid = 0.5 * (lo + hi)
        nr = (magnitudes(mid) ** q).sum(axis=1) ** (1.0 / q)
        too_big = nr > radius
        lo = np.where(too_big, mid, lo)
        hi = np.where(too_big, hi, mid)
    B = magnitudes(0.5 * (lo + hi))
    out[bad] = np.sign(Y[bad]) * B
    return out


def _project_polygon(Y, verts, normals, offsets, radius):
    """Exact projection of rows of Y onto radius * conv(verts) in the plane."""
    inside = np.all(Y @ normals.T <= radius * offsets[None, :] + 1e-15, axis=1)
    out = Y.copy()
    bad = ~inside
    if not np.any(bad):
        return out
    P = radius * verts
    A = P
    B = np.roll(P, -1, axis=0)
    E = B - A  # (k, 2) edge vectors
    ee = (E * E).sum(axis=1)
    Yb = Y[bad]
    # parameter of the closest point on each edge, clamped to the segment
    t = ((Yb[:, None, :] - A[None, :, :]) * E[None, :, :]).sum(axis=2) / ee[None, :]
    t = np.clip(t, 0.0, 1.0)
    C = A[None, :, :] + t[:, :, None] * E[None, :, :]
    d2 = ((Yb[:, None, :] - C) ** 2).sum(axis=2)
    pick = np.argmin(d2, axis=1)
    out[bad] = C[np.arange(Yb.shape[0]), pick]
    return out


def _project_halfspaces_dykstra(Y, G, rhs, radius, tol=1e-12, max_cycles=10000):
    """Dykstra projection of rows of Y onto {u : G u <= radius * rhs}.

    Plain cyclic projections would only find a feasible point; the
    correction terms make the limit the true nearest point.
    """
    m = G.shape[0]
    X = Y.copy()
    corrections = np.zeros((m,) + Y.shape)
    gg = (G * G).sum(axis=1)
    scale = max(1.0, float(np.max(np.abs(Y))))
    for _ in range(max_cycles):
        shift = 0.0
        for i in range(m):
            V = X + corrections[i]
            viol = (V @ G[i] - radius * rhs[i]) / gg[i]
            step = np.maximum(viol, 0.0)
            Xn = V - step[:, None] * G[i][None, :]
            corrections[i] = V - Xn
            shift = max(shift, float(np.max(np.abs(Xn - X))))
            X = Xn
        if shift <= tol * scale:
            return X
    raise RuntimeError(
        "dual-ball projection did not converge after "
        f"{max_cycles} cycles; polyhedral data may be ill-conditioned"
    )


class Anisotropy:
    """A convex one-homogeneous gauge with its polar and dual-ball geometry.

    Construct through the classmethods (`euclidean`, `weighted_l1`,
    `l_infinity`, `p_norm`, `ellipse`, `polyhedral`, `shifted`).  All
    instances are immutable after construction and safe to share across
    workers.
    """

    _KINDS = (
        "euclidean",
        "weighted-l1",
        "l-infinity",
        "p-norm",
        "ellipse",
        "polyhedral",
        "shifted",
        "polar",
    )

    def __init__(self, kind, dimension, params):
        if kind not in self._KINDS:
            raise ValueError(f"unknown anisotropy kind: {kind!r}")
        if dimension not in (2, 3):
            raise ValueError(f"dimension must be 2 or 3, got {dimension}")
        self.kind = kind
        self.dimension = int(dimension)
        self._params = params

    # ----- constructors -------------------------------------------------

    @classmethod
    def euclidean(cls, dimension=2):
        return cls("euclidean", dimension, {})

    @classmethod
    def weighted_l1(cls, weights):
        w = np.asarray(weights, dtype=np.float64)
        if w.ndim != 1 or w.shape[0] not in (2, 3):
            raise ValueError("weights must be a vector of length 2 or 3")
        if np.any(w <= 0.0):
            raise ValueError("weights must be positive")
        return cls("weighted-l1", w.shape[0], {"weights": w})

    @classmethod
    def l_infinity(cls, weights):
        w = np.asarray(weights, dtype=np.float64)
        if w.ndim != 1 or w.shape[0] not in (2, 3):
            raise ValueError("weights must be a vector of length 2 or 3")
        if np.any(w <= 0.0):
            raise ValueError("weights must be positive")
        return cls("l-infinity", w.shape[0], {"weights": w})

    @classmethod
    def p_norm(cls, p, dimension=2):
        p = float(p)
        if not 1.0 < p < np.inf:
            raise ValueError("p must lie strictly between 1 and infinity")
        q = p / (p - 1.0)
        return cls("p-norm", dimension, {"p": p, "q": q})

    @classmethod
    def ellipse(cls, matrix):
        A = np.asarray(matrix, dtype=np.float64)
        if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] not in (2, 3):
            raise ValueError("matrix must be 2x2 or 3x3")
        if not np.allclose(A, A.T, rtol=0.0, atol=1e-12 * max(1.0, float(np.max(np.abs(A))))):
            raise ValueError("matrix must be symmetric")
        A = 0.5 * (A + A.T)
        evals = np.linalg.eigvalsh(A)
        if np.any(evals <= 0.0):
            raise ValueError("matrix must be positive definite")
        B = np.linalg.inv(A)
        lam, Q = np.linalg.eigh(B)
        return cls(
            "ellipse",
            A.shape[0],
            {"A": A, "B": B, "dual_eigvals": lam, "dual_eigvecs": Q},
        )

    @classmethod
    def polyhedral(cls, directions, offsets=None):
        V = np.asarray(directions, dtype=np.float64)
        if V.ndim != 2 or V.shape[1] not in (2, 3):
            raise ValueError("directions must be an (m, 2) or (m, 3) array")
        if offsets is None:
            c = np.ones(V.shape[0])
        else:
            c = np.asarray(offsets, dtype=np.float64)
        if c.shape != (V.shape[0],) or np.any(c <= 0.0):
            raise ValueError("offsets must be positive, one per direction")
        dim = V.shape[1]
        if V.shape[0] < dim + 1:
            raise ValueError("need at least dimension+1 support directions")
        pts = V / c[:, None]
        if ConvexHull is None:  # pragma: no cover
            raise RuntimeError("scipy is required for polyhedral gauges")
        try:
            hull = ConvexHull(pts)
        except Exception as exc:
            raise ValueError(f"degenerate polyhedral data: {exc}") from exc
        # hull.equations rows are [a, -b] with a.x <= b on the hull
        normals = hull.equations[:, :dim].copy()
        hoffs = -hull.equations[:, dim].copy()
        if np.any(hoffs <= 1e-12):
            raise ValueError("origin must lie in the interior of the dual ball")
        # in 2D ConvexHull orders the vertices counterclockwise already
        verts = pts[hull.vertices].copy()
        return cls(
            "polyhedral",
            dim,
            {
                "directions": V,
                "offsets": c,
                "ball_vertices": verts,
                "facet_normals": normals,
                "facet_offsets": hoffs,
            },
        )

    @classmethod
    def shifted(cls, base, offset):
        if not isinstance(base, Anisotropy) or base.kind not in ("euclidean", "polyhedral"):
            raise ValueError("shifted gauges take a euclidean or polyhedral base")
        b = np.asarray(offset, dtype=np.float64)
        if b.shape != (base.dimension,):
            raise ValueError("offset dimension does not match the base gauge")
        if base.eval(-b) >= 1.0 - 1e-9:
            raise ValueError("offset too large: origin leaves the shifted body interior")
        params = {"base": base, "offset": b}
        if base.kind == "euclidean":
            # dual ball {|y| + b.y <= r} is an ellipsoid; precompute its frame
            d = base.dimension
            M = np.eye(d) - np.outer(b, b)
            lam, Q = np.linalg.eigh(M)
            params["dual_M_eigvals"] = lam
            params["dual_M_eigvecs"] = Q
            params["dual_center_unit"] = -b / (1.0 - float(b @ b))
            params["dual_rhs_unit"] = 1.0 / (1.0 - float(b @ b))
        return cls("shifted", base.dimension, params)

    @classmethod
    def _polar_of(cls, inner):
        """Polar of a shifted gauge (internal; not a scenario kind)."""
        return cls("polar", inner.dimension, {"inner": inner})

    # ----- evaluation ---------------------------------------------------

    def eval_many(self, x):
        X, _ = _as_points(x, self.dimension)
        k = self.kind
        if k == "euclidean":
            return np.sqrt((X * X).sum(axis=1))
        if k == "weighted-l1":
            return np.abs(X) @ self._params["weights"]
        if k == "l-infinity":
            return np.max(np.abs(X) * self._params["weights"][None, :], axis=1)
        if k == "p-norm":
            p = self._params["p"]
            return (np.abs(X) ** p).sum(axis=1) ** (1.0 / p)
        if k == "ellipse":
            A = self._params["A"]
            return np.sqrt(np.maximum((X @ A * X).sum(axis=1), 0.0))
        if k == "polyhedral":
            pts = self._params["directions"] / self._params["offsets"][:, None]
            return np.max(X @ pts.T, axis=1)
        if k == "shifted":
            return self._shifted_eval(X)
        if k == "polar":
            return self._params["inner"].dual_eval_many(X)
        raise AssertionError(k)

    def dual_eval_many(self, y):
        Y, _ = _as_points(y, self.dimension)
        k = self.kind
        if k == "euclidean":
            return np.sqrt((Y * Y).sum(axis=1))
        if k == "weighted-l1":
            return np.max(np.abs(Y) / self._params["weights"][None, :], axis=1)
        if k == "l-infinity":
            return np.abs(Y) @ (1.0 / self._params["weights"])
        if k == "p-norm":
            q = self._params["q"]
            return (np.abs(Y) ** q).sum(axis=1) ** (1.0 / q)
        if k == "ellipse":
            B = self._params["B"]
            return np.sqrt(np.maximum((Y @ B * Y).sum(axis=1), 0.0))
        if k == "polyhedral":
            # gauge of the dual ball via its facets == max over polar vertices
            pts = self._params["facet_normals"] / self._params["facet_offsets"][:, None]
            return np.max(Y @ pts.T, axis=1)
        if k == "shifted":
            base = self._params["base"]
            return base.dual_eval_many(Y) + Y @ self._params["offset"]
        if k == "polar":
            return self._params["inner"].eval_many(Y)
        raise AssertionError(k)

    def eval(self, x):
        return float(self.eval_many(np.asarray(x, dtype=np.float64)[None, :])[0])

    def dual_eval(self, y):
        return float(self.dual_eval_many(np.asarray(y, dtype=np.float64)[None, :])[0])

    def _shifted_eval(self, X):
        base = self._params["base"]
        b = self._params["offset"]
        g0 = base.eval_many(X)
        denom = 1.0 - base.eval(-b)
        out = np.zeros(X.shape[0])
        pos = g0 > 0.0
        if not np.any(pos):
            return out
        Xp = X[pos]
        # gauge of the translated body: solve base(x - t b) = t by bisection
        lo = np.zeros(Xp.shape[0])
        hi = g0[pos] / denom + 1e-300
        for _ in range(_BISECT_ITERS):
            mid = 0.5 * (lo + hi)
            f = base.eval_many(Xp - mid[:, None] * b[None, :]) - mid
            lo = np.where(f > 0.0, mid, lo)
            hi = np.where(f > 0.0, hi, mid)
        out[pos] = 0.5 * (lo + hi)
        return out

    # ----- subgradient selection ----------------------------------------

    def subgradient(self, x):
        """A selection z from the subdifferential at x != 0.

        z satisfies z.x = eval(x) and dual_eval(z) <= 1.  At non-smooth
        points ties are broken by the lexicographically smallest extreme
        point of the subdifferential face (weighted-l1 uses the face
        selection sign(0) -> 0 instead, matching the coordinate axes).
        """
        v = np.asarray(x, dtype=np.float64)
        if v.shape != (self.dimension,):
            raise ValueError(f"dimension mismatch: expected {self.dimension}-vector")
        if not np.any(v != 0.0):
            raise ValueError("subgradient requires a nonzero input")
        k = self.kind
        if k == "euclidean":
            return v / np.linalg.norm(v)
        if k == "weighted-l1":
            return self._params["weights"] * np.sign(v)
        if k == "l-infinity":
            w = self._params["weights"]
            vals = w * np.abs(v)
            m = vals.max()
            active = np.nonzero(vals >= m - 1e-12 * max(1.0, m))[0]
            cands = np.zeros((active.size, self.dimension))
            cands[np.arange(active.size), active] = np.sign(v[active]) * w[active]
            return _lex_smallest(cands)
        if k == "p-norm":
            p = self._params["p"]
            nrm = self.eval(v)
            return np.sign(v) * (np.abs(v) / nrm) ** (p - 1.0)
        if k == "ellipse":
            A = self._params["A"]
            return A @ v / self.eval(v)
        if k == "polyhedral":
            pts = self._params["directions"] / self._params["offsets"][:, None]
            vals = pts @ v
            m = vals.max()
            active = vals >= m - 1e-12 * max(1.0, abs(m))
            return _lex_smallest(pts[active])
        if k == "shifted":
            base = self._params["base"]
            b = self._params["offset"]
            lam = self.eval(v)
            z0 = base.subgradient(v - lam * b)
            return z0 / (1.0 + float(b @ z0))
        if k == "polar":
            inner = self._params["inner"]
            base = inner._params["base"]
            b = inner._params["offset"]
            return base.dual().subgradient(v) + b
        raise AssertionError(k)

    # ----- dual-ball projection ------------------------------------------

    def project_dual_many(self, y, radius=1.0):
        """Euclidean projection of rows of y onto {z : dual_eval(z) <= radius}."""
        Y, _ = _as_points(y, self.dimension)
        r = float(radius)
        k = self.kind
        if k == "euclidean":
            nrm = np.sqrt((Y * Y).sum(axis=1))
            scale = np.where(nrm > r, r / np.maximum(nrm, 1e-300), 1.0)
            return Y * scale[:, None]
        if k == "weighted-l1":
            w = self._params["weights"]
            return np.clip(Y, -r * w[None, :], r * w[None, :])
        if k == "l-infinity":
            return _project_weighted_l1_ball(Y, 1.0 / self._params["weights"], r)
        if k == "p-norm":
            return _project_q_ball(Y, self._params["q"], r)
        if k == "ellipse":
            return _project_ellipsoid(
                Y,
                self._params["dual_eigvecs"],
                self._params["dual_eigvals"],
                np.zeros(self.dimension),
                r * r,
            )
        if k == "polyhedral":
            if self.dimension == 2:
                return _project_polygon(
                    Y,
                    self._params["ball_vertices"],
                    self._params["facet_normals"],
                    self._params["facet_offsets"],
                    r,
                )
            return _project_halfspaces_dykstra(
                Y, self._params["facet_normals"], self._params["facet_offsets"], r
            )
        if k == "shifted":
            base = self._params["base"]
            b = self._params["offset"]
            if base.kind == "euclidean":
                return _project_ellipsoid(
                    Y,
                    self._params["dual_M_eigvecs"],
                    self._params["dual_M_eigvals"],
                    r * self._params["dual_center_unit"],
                    r * r * self._params["dual_rhs_unit"],
                )
            # {max_i a_i.y/b_i + b.y <= r} as plain half spaces
            A = self._params["base"]._params["facet_normals"]
            bb = self._params["base"]._params["facet_offsets"]
            G = A / bb[:, None] + b[None, :]
            return _project_halfspaces_dykstra(Y, G, np.ones(G.shape[0]), r)
        if k == "polar":
            inner = self._params["inner"]
            base = inner._params["base"]
            b = inner._params["offset"]
            # this dual ball is the shifted body itself: r*b + (base ball of radius r)
            shiftv = r * b[None, :]
            return base.dual().project_dual_many(Y - shiftv, radius=r) + shiftv
        raise AssertionError(k)

    def project_dual_ball(self, y, radius=1.0):
        return self.project_dual_many(np.asarray(y, dtype=np.float64)[None, :], radius)[0]

    # ----- structure ------------------------------------------------------

    def dual(self):
        """The polar gauge as a full Anisotropy instance."""
        k = self.kind
        if k == "euclidean":
            return Anisotropy.euclidean(self.dimension)
        if k == "weighted-l1":
            return Anisotropy.l_infinity(1.0 / self._params["weights"])
        if k == "l-infinity":
            return Anisotropy.weighted_l1(1.0 / self._params["weights"])
        if k == "p-norm":
            return Anisotropy.p_norm(self._params["q"], self.dimension)
        if k == "ellipse":
            return Anisotropy.ellipse(self._params["B"])
        if k == "polyhedral":
            return Anisotropy.polyhedral(
                self._params["facet_normals"], self._params["facet_offsets"]
            )
        if k == "shifted":
            return Anisotropy._polar_of(self)
        if k == "polar":
            return self._params["inner"]
        raise AssertionError(k)

    def is_symmetric(self):
        return self.kind not in ("shifted", "polar")

    def _solver_tag(self):
        """Fast-path hint for the fused solver kernels."""
        if self.kind == "euclidean":
            return ("euclid", None)
        if self.kind == "weighted-l1":
            return ("l1", self._params["weights"])
        return ("generic", None)

    def __repr__(self):
        return f"Anisotropy(kind={self.kind!r}, dimension={self.dimension})"
