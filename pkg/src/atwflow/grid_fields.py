"""Uniform Cartesian grids, discrete fields and the discrete calculus on them.

Conventions chosen once and shared by every consumer:

* cell centers sit at origin + (i + 1/2) * spacing;
* `grad_forward` takes forward differences per axis and stores a zero in
  the last slice (one-sided closure at the top boundary);
* `div_backward` is the exact negative adjoint of `grad_forward`;
* indicator fields must keep the two outermost cell layers empty (the
  "frame"), which enforces compact support inside the computational box;
* sums are plain numpy reductions (pairwise, fixed order), so repeated
  runs produce bit-identical values.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

FRAME_WIDTH = 2


class FrameViolation(ValueError):
    """A set reached the protected frame layers of the domain."""


@dataclass(frozen=True)
class GridDomain:
    """Axis-aligned box [origin, origin + extent) split into uniform cells."""

    origin: tuple
    extent: tuple
    cells: tuple

    def __post_init__(self):
        origin = tuple(float(v) for v in self.origin)
        extent = tuple(float(v) for v in self.extent)
        cells = tuple(int(v) for v in self.cells)
        if not (len(origin) == len(extent) == len(cells)):
            raise ValueError("origin, extent and cells must have matching length")
        if len(cells) not in (2, 3):
            raise ValueError("only 2- and 3-dimensional domains are supported")
        if any(n < 4 for n in cells):
            raise ValueError("need at least 4 cells per axis")
        if any(e <= 0.0 for e in extent):
            raise ValueError("extent must be positive")
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "extent", extent)
        object.__setattr__(self, "cells", cells)

    @property
    def dim(self):
        return len(self.cells)

    @property
    def shape(self):
        return self.cells

    @property
    def spacing(self):
        return np.array(self.extent) / np.array(self.cells)

    @property
    def cell_volume(self):
        return float(np.prod(self.spacing))

    def axis_centers(self, axis):
        n = self.cells[axis]
        h = self.spacing[axis]
        return self.origin[axis] + (np.arange(n) + 0.5) * h

    def center_mesh(self):
        axes = [self.axis_centers(a) for a in range(self.dim)]
        return np.meshgrid(*axes, indexing="ij")

    def center_points(self):
        mesh = self.center_mesh()
        return np.stack([m.ravel() for m in mesh], axis=1)

    def subdomain(self, lo, hi):
        """Cell-index window [lo, hi) as a domain sharing this one's lattice."""
        lo = tuple(int(v) for v in lo)
        hi = tuple(int(v) for v in hi)
        sp = self.spacing
        if any(a < 0 or b > n or b - a < 4 for a, b, n in zip(lo, hi, self.cells)):
            raise ValueError("window out of range or smaller than 4 cells")
        origin = tuple(self.origin[a] + lo[a] * sp[a] for a in range(self.dim))
        extent = tuple((hi[a] - lo[a]) * sp[a] for a in range(self.dim))
        return GridDomain(origin, extent, tuple(b - a for a, b in zip(lo, hi)))


def _check_values(domain, values, dtype):
    arr = np.asarray(values, dtype=dtype)
    if arr.shape != domain.shape:
        raise ValueError(f"field shape {arr.shape} does not match domain {domain.shape}")
    return arr


@dataclass
class ScalarField:
    domain: GridDomain
    values: np.ndarray

    def __post_init__(self):
        self.values = _check_values(self.domain, self.values, np.float64)
        if not np.all(np.isfinite(self.values)):
            raise ValueError("scalar field must be finite")

    @classmethod
    def from_function(cls, domain, fn):
        return cls(domain, np.asarray(fn(*domain.center_mesh()), dtype=np.float64))

    def copy(self):
        return ScalarField(self.domain, self.values.copy())


@dataclass
class IndicatorField:
    domain: GridDomain
    membership: np.ndarray

    def __post_init__(self):
        self.membership = _check_values(self.domain, self.membership, bool)
        if _touches_frame(self.membership):
            raise FrameViolation(
                f"member cells inside the {FRAME_WIDTH}-cell frame: "
                "the evolving set must stay compactly inside the domain"
            )

    @classmethod
    def empty(cls, domain):
        return cls(domain, np.zeros(domain.shape, dtype=bool))

    def copy(self):
        return IndicatorField(self.domain, self.membership.copy())

    def is_empty(self):
        return not bool(self.membership.any())

    def count(self):
        return int(self.membership.sum())

    def bbox(self):
        """Inclusive-exclusive index bounds of the member cells, or None."""
        if self.is_empty():
            return None
        idx = np.nonzero(self.membership)
        lo = tuple(int(a.min()) for a in idx)
        hi = tuple(int(a.max()) + 1 for a in idx)
        return lo, hi


@dataclass
class VectorField:
    domain: GridDomain
    vectors: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.vectors, dtype=np.float64)
        if arr.shape != self.domain.shape + (self.domain.dim,):
            raise ValueError(
                f"vector field shape {arr.shape} does not match domain "
                f"{self.domain.shape + (self.domain.dim,)}"
            )
        if not np.all(np.isfinite(arr)):
            raise ValueError("vector field must be finite")
        self.vectors = arr

    @classmethod
    def zeros(cls, domain):
        return cls(domain, np.zeros(domain.shape + (domain.dim,)))


def _touches_frame(mask):
    w = FRAME_WIDTH
    for axis in range(mask.ndim):
        edge = [slice(None)] * mask.ndim
        edge[axis] = slice(0, w)
        if mask[tuple(edge)].any():
            return True
        edge[axis] = slice(-w, None)
        if mask[tuple(edge)].any():
            return True
    return False


# ----- differential calculus -------------------------------------------------


def grad_forward_array(values, spacing):
    """Forward differences of an ndarray; zero stored in the last slice per axis."""
    d = values.ndim
    out = np.zeros(values.shape + (d,))
    for a in range(d):
        lo = [slice(None)] * d
        hi = [slice(None)] * d
        lo[a] = slice(0, -1)
        hi[a] = slice(1, None)
        out[tuple(lo) + (a,)] = (values[tuple(hi)] - values[tuple(lo)]) / spacing[a]
    return out


def div_backward_array(vectors, spacing):
    """Exact negative adjoint of grad_forward_array.

    The last slice of each component is treated as zero, mirroring the
    zero stored there by the gradient.
    """
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


def grad_forward(f: ScalarField) -> VectorField:
    return VectorField(f.domain, grad_forward_array(f.values, f.domain.spacing))


def div_backward(p: VectorField) -> ScalarField:
    return ScalarField(p.domain, div_backward_array(p.vectors, p.domain.spacing))


# ----- integral quantities ---------------------------------------------------


def volume(e: IndicatorField) -> float:
    return e.count() * e.domain.cell_volume


def perimeter_phi(e: IndicatorField, phi) -> float:
    """Discrete anisotropic perimeter: sum of phi(-grad chi_E) times cell volume.

    This is by construction the same functional the implicit-step solver
    minimizes, so its minimality statements transfer verbatim.
    """
    chi = e.membership.astype(np.float64)
    g = grad_forward_array(chi, e.domain.spacing)
    vals = phi.eval_many(-g.reshape(-1, e.domain.dim))
    return float(vals.sum() * e.domain.cell_volume)


def total_variation_phi(values, spacing, phi) -> float:
    """Anisotropic total variation of an arbitrary scalar array (same functional)."""
    g = grad_forward_array(values, spacing)
    vals = phi.eval_many(-g.reshape(-1, values.ndim))
    return float(vals.sum() * float(np.prod(spacing)))


# ----- shape constructors ----------------------------------------------------


def shape(kind, dom: GridDomain, **params) -> IndicatorField:
    """Rasterize a named shape; a cell is a member iff its center lies inside.

    Kinds: ball(radius, center), rectangle(lo, hi), cross(arm_length),
    wulff(phi, radius, center), disk-union(centers, radii).
    """
    mesh = dom.center_mesh()
    if kind == "ball":
        radius = float(params["radius"])
        center = np.asarray(params.get("center", np.zeros(dom.dim)), dtype=np.float64)
        r2 = sum((m - c) ** 2 for m, c in zip(mesh, center))
        mask = r2 <= radius * radius
    elif kind == "rectangle":
        lo = np.asarray(params["lo"], dtype=np.float64)
        hi = np.asarray(params["hi"], dtype=np.float64)
        mask = np.ones(dom.shape, dtype=bool)
        for a in range(dom.dim):
            mask &= (mesh[a] >= lo[a]) & (mesh[a] <= hi[a])
    elif kind == "cross":
        if dom.dim != 2:
            raise ValueError("cross shapes are two-dimensional")
        L = float(params.get("arm_length", 2.0))
        if L < 1.0:
            raise ValueError("cross needs arm_length >= 1")
        x, y = mesh
        mask = ((np.abs(x) <= 1.0) & (np.abs(y) <= L)) | (
            (np.abs(y) <= 1.0) & (np.abs(x) <= L)
        )
    elif kind == "wulff":
        phi = params["phi"]
        radius = float(params["radius"])
        center = np.asarray(params.get("center", np.zeros(dom.dim)), dtype=np.float64)
        pts = dom.center_points() - center[None, :]
        mask = (phi.dual_eval_many(pts) <= radius).reshape(dom.shape)
    elif kind == "disk-union":
        centers = np.asarray(params["centers"], dtype=np.float64)
        radii = np.asarray(params["radii"], dtype=np.float64)
        if centers.ndim != 2 or centers.shape[0] != radii.shape[0]:
            raise ValueError("need one center per radius")
        mask = np.zeros(dom.shape, dtype=bool)
        for c, r in zip(centers, radii):
            r2 = sum((m - cc) ** 2 for m, cc in zip(mesh, c))
            mask |= r2 <= r * r
    else:
        raise ValueError(f"unknown shape kind: {kind!r}")
    if _touches_frame(mask):
        raise FrameViolation(f"shape {kind!r} touches the domain frame; enlarge the box")
    return IndicatorField(dom, mask)


# ----- contours (2D) ---------------------------------------------------------

# marching-squares segments per 4-bit cell code; corners are
# (i,j)=SW, (i+1,j)=SE, (i,j+1)=NW, (i+1,j+1)=NE with bits 1,2,4,8.
# Each entry lists (entry_edge, exit_edge) pairs; edges 0=S,1=E,2=N,3=W.
_MS_SEGMENTS = {
    0: [],
    1: [(3, 0)],
    2: [(0, 1)],
    3: [(3, 1)],
    4: [(2, 3)],
    5: [(2, 0)],
    6: [(0, 1), (2, 3)],  # saddle: member cells NOT connected across
    7: [(2, 1)],
    8: [(1, 2)],
    9: [(3, 0), (1, 2)],  # saddle: member cells NOT connected across
    10: [(0, 2)],
    11: [(3, 2)],
    12: [(1, 3)],
    13: [(1, 0)],
    14: [(0, 3)],
    15: [],
}


def contour_extract(e: IndicatorField):
    """Closed boundary polylines on the dual grid (marching squares).

    Binary data puts every crossing at an edge midpoint.  The saddle
    cases always disconnect the member cells (deterministic corner
    rule).  Returns a list of (k, 2) arrays of physical coordinates,
    each polyline closed (first point == last point).
    """
    mask = e.membership
    if e.domain.dim != 2:
        raise ValueError("contour extraction is implemented for 2D fields")
    if not mask.any():
        return []
    sx, sy = e.domain.spacing
    ox, oy = e.domain.origin

    # edge midpoints live on a half-step lattice so keys stay exact integers;
    # cell center (i, j) sits at lattice point (2i, 2j)
    def edge_key(i, j, edge):
        if edge == 0:
            return (2 * i + 1, 2 * j)
        if edge == 1:
            return (2 * i + 2, 2 * j + 1)
        if edge == 2:
            return (2 * i + 1, 2 * j + 2)
        return (2 * i, 2 * j + 1)

    # collect directed segments entry->exit, then chain them into loops
    segments = {}
    m = mask.astype(np.int8)
    code = (
        m[:-1, :-1] + 2 * m[1:, :-1] + 4 * m[:-1, 1:] + 8 * m[1:, 1:]
    )
    for i, j in zip(*np.nonzero((code > 0) & (code < 15))):
        for entry, exit_ in _MS_SEGMENTS[int(code[i, j])]:
            segments[edge_key(i, j, entry)] = edge_key(i, j, exit_)
    loops = []
    while segments:
        start = min(segments)  # deterministic: lexicographically first key
        pts = [start]
        cur = start
        while True:
            nxt = segments.pop(cur)
            pts.append(nxt)
            cur = nxt
            if cur == start:
                break
        pts = np.array(pts, dtype=np.float64)
        pts[:, 0] = ox + 0.5 * (pts[:, 0] + 1.0) * sx
        pts[:, 1] = oy + 0.5 * (pts[:, 1] + 1.0) * sy
        loops.append(pts)
    return loops


# ----- raster / text export --------------------------------------------------

_MAGIC = b"ATWF"


def save_raster(path, field):
    """Binary dump: 32-byte header (magic, ndim, dims, spacing) + float64 payload.

    The header does not record the origin; rasters are lattice data only.
    """
    values = field.values if isinstance(field, ScalarField) else field.membership
    arr = np.asarray(values, dtype="<f8")
    dom = field.domain
    dims = list(dom.shape) + [1] * (3 - dom.dim)
    sp = list(dom.spacing) + [0.0] * (3 - dom.dim)
    header = _MAGIC + np.array([dom.dim], "<u4").tobytes()
    header += np.array(dims, "<u4").tobytes()
    header += np.array(sp, "<f4").tobytes()
    assert len(header) == 32
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(arr).tobytes())


def load_raster(path):
    """Inverse of save_raster; returns (values, spacing) without an origin."""
    with open(path, "rb") as fh:
        header = fh.read(32)
        if header[:4] != _MAGIC:
            raise ValueError("not a raster file: bad magic")
        ndim = int(np.frombuffer(header, "<u4", count=1, offset=4)[0])
        dims = np.frombuffer(header, "<u4", count=3, offset=8)[:ndim]
        spacing = np.frombuffer(header, "<f4", count=3, offset=20)[:ndim]
        payload = fh.read()
    values = np.frombuffer(payload, "<f8").reshape(tuple(int(n) for n in dims)).copy()
    return values, spacing.astype(np.float64)


def save_pgm(path, field):
    """Plain-text grey map of a 2D field, for eyeballing in a terminal."""
    values = field.values if isinstance(field, ScalarField) else field.membership
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError("text export is implemented for 2D fields")
    lo, hi = float(arr.min()), float(arr.max())
    scale = 255.0 / (hi - lo) if hi > lo else 0.0
    grey = np.round((arr - lo) * scale).astype(int)
    with open(path, "w") as fh:
        fh.write(f"P2\n{arr.shape[0]} {arr.shape[1]}\n255\n")
        # row-major top row first, matching image conventions
        for row in grey[:, ::-1].T:
            fh.write(" ".join(str(v) for v in row) + "\n")
