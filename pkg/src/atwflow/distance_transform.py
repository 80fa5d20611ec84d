"""Signed gauge distances to a set, per the non-symmetric convention.

For a gauge g and set E the signed distance at x is

    d(x) = inf_{y in E} g(x - y)  -  inf_{y not in E} g(y - x),

note the reversed argument in the second infimum: for non-symmetric
gauges the two parts measure "cost of travelling from E to x" and "cost
of travelling from x out of E".

A grid set is the union of its closed cells, so its boundary runs along
cell faces, half a cell away from the nearest centers: a cell at
lattice depth k reports (k - 1/2) edge costs.  Measuring
center-to-center instead (depth k reports k full edges) inflates every
magnitude by half a cell; fed into the implicit step that bias rounds
facet motion down by one cell per step and stalls grid-aligned
crystalline facets well below their true speed.

The fast sweep dispatches on the gauge.  Non-euclidean gauges run a
chamfer relaxation on the 16-neighbor (2D) / 26-neighbor (3D) lattice
graph seeded with exact near-field values; that is exact for l1 and
l-infinity costs on axis-aligned geometry and otherwise overestimates
by at most the graph's directional gap (documented bound: 3%).  The 2D
euclidean gauge instead measures to a sub-cell interface
reconstruction (smoothed midpoint polygon): exact distance to the
jagged region boundary reads ~0.2 cells low along curved interfaces,
a bias the implicit step amplifies into a systematically fast front.
The brute-force evaluator minimizes over sampled boundary faces of the
cell region (oracle, desk scale).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .anisotropy import Anisotropy
from .grid_fields import GridDomain, IndicatorField, ScalarField, grad_forward_array

OFFSETS_2D = np.array(
    [
        (1, 0), (-1, 0), (0, 1), (0, -1),
        (1, 1), (1, -1), (-1, 1), (-1, -1),
        (2, 1), (2, -1), (-2, 1), (-2, -1),
        (1, 2), (1, -2), (-1, 2), (-1, -2),
    ],
    dtype=np.int64,
)

OFFSETS_3D = np.array(
    [
        (i, j, k)
        for i in (-1, 0, 1)
        for j in (-1, 0, 1)
        for k in (-1, 0, 1)
        if (i, j, k) != (0, 0, 0)
    ],
    dtype=np.int64,
)


@dataclass
class SignedDistance:
    """A signed distance field together with the gauge and set that made it."""

    field: ScalarField
    gauge: Anisotropy
    source: IndicatorField

    @property
    def values(self):
        return self.field.values

    @property
    def domain(self) -> GridDomain:
        return self.field.domain


def _validate_set(e: IndicatorField):
    if e.is_empty():
        raise ValueError("signed distance needs a nonempty set")
    if e.membership.all():
        raise ValueError("signed distance needs a set with nonempty complement")


def _boundary_face_points(mask, dom):
    """Sample points covering the faces between member and non-member cells.

    One face per sign change along each axis, sampled on a transverse
    lattice (65 points in 2D, 9x9 in 3D) including corners; duplicates
    where faces meet are harmless under the min.
    """
    dim = mask.ndim
    sp = dom.spacing
    per_axis = 65 if dim == 2 else 9
    rel = np.linspace(-0.5, 0.5, per_axis)
    chunks = []
    for a in range(dim):
        lo = [slice(None)] * dim
        hi = [slice(None)] * dim
        lo[a] = slice(None, -1)
        hi[a] = slice(1, None)
        cross = mask[tuple(lo)] != mask[tuple(hi)]
        idx = np.argwhere(cross).astype(np.float64)
        if idx.shape[0] == 0:
            continue
        centers = np.asarray(dom.origin, dtype=np.float64)[None, :] + (idx + 0.5) * sp[None, :]
        centers[:, a] += 0.5 * sp[a]
        others = [b for b in range(dim) if b != a]
        if dim == 2:
            b = others[0]
            offs = np.zeros((per_axis, dim))
            offs[:, b] = rel * sp[b]
        else:
            b, c = others
            tb, tc = np.meshgrid(rel, rel, indexing="ij")
            offs = np.zeros((per_axis * per_axis, dim))
            offs[:, b] = tb.ravel() * sp[b]
            offs[:, c] = tc.ravel() * sp[c]
        chunks.append((centers[:, None, :] + offs[None, :, :]).reshape(-1, dim))
    return np.concatenate(chunks, axis=0)


def _min_gauge_to(points, xs, gauge, reversed_arg):
    vals = np.full(xs.shape[0], np.inf)
    dim = xs.shape[1]
    for start in range(0, points.shape[0], 64):
        q = points[start : start + 64]
        diff = (q[None, :, :] - xs[:, None, :]) if reversed_arg else (xs[:, None, :] - q[None, :, :])
        block = gauge.eval_many(diff.reshape(-1, dim)).reshape(xs.shape[0], -1)
        np.minimum(vals, block.min(axis=1), out=vals)
    return vals


def signed_distance_bruteforce(e: IndicatorField, psi_dual: Anisotropy) -> SignedDistance:
    """Signed distance by explicit minimization over sampled boundary faces.

    Exact up to the transverse face sampling (spacing/64 in 2D), which
    for the piecewise-linear gauges in the test suite is far below the
    chamfer comparison tolerances.
    """
    _validate_set(e)
    dom = e.domain
    if psi_dual.dimension != dom.dim:
        raise ValueError("gauge dimension does not match the domain")
    mask = e.membership
    pts = dom.center_points()
    faces = _boundary_face_points(mask, dom)

    flat = mask.ravel()
    d_out = np.zeros(pts.shape[0])
    d_in = np.zeros(pts.shape[0])
    d_out[~flat] = _min_gauge_to(faces, pts[~flat], psi_dual, reversed_arg=False)
    d_in[flat] = _min_gauge_to(faces, pts[flat], psi_dual, reversed_arg=True)
    values = (d_out - d_in).reshape(dom.shape)
    return SignedDistance(ScalarField(dom, values), psi_dual, e)


def _chamfer(dist, offsets, weights, backend):
    if dist.ndim == 2:
        backend.chamfer_fixpoint_2d(dist, offsets, weights)
    else:
        backend.chamfer_fixpoint_3d(dist, offsets, weights)
    return dist


def _smooth_closed_polyline(pts, window=5):
    """Circular moving average of a closed polyline's vertices.

    Exact on collinear runs (straight facets are preserved); on jagged
    runs it removes the half-cell rasterization jitter.  Polylines too
    short to wrap the window are returned unchanged.
    """
    if pts.shape[0] - 1 < 2 * window:
        return pts
    ring = pts[:-1]
    acc = np.zeros_like(ring)
    half = window // 2
    for k in range(-half, half + 1):
        acc += np.roll(ring, k, axis=0)
    ring = acc / window
    return np.vstack([ring, ring[:1]])


def _euclid_interface_distance(e):
    """Signed euclidean distance to the sub-cell interface reconstruction.

    The interface is the marching-squares midpoint polygon, smoothed
    along itself; pointwise distance to the raw polygon would see its
    cell-scale jitter and read ~0.2 cells low on both sides of every
    curved boundary, which the implicit step amplifies into a
    systematically fast front.  Distances are evaluated exactly against
    the densified polyline via a KD-tree.
    """
    from scipy.spatial import cKDTree

    from .grid_fields import contour_extract

    pts = []
    for poly in contour_extract(e):
        poly = _smooth_closed_polyline(poly)
        seg = poly[1:] - poly[:-1]
        for k in range(4):
            pts.append(poly[:-1] + seg * (k / 4.0))
    cloud = np.concatenate(pts, axis=0)
    dist, _ = cKDTree(cloud).query(e.domain.center_points(), workers=1)
    vals = dist.reshape(e.domain.shape)
    return np.where(e.membership, -vals, vals)


def _euclid_region_distance(others, dom):
    """Exact euclidean distance from cell centers to the region spanned
    by the cells of `others` (treated as closed boxes).

    Uses the feature transform to the nearest other-region center, then
    measures to that cell's box: per axis the gap is (|index offset| -
    1/2) spacings, floored at zero.  Always an upper bound (the chosen
    box lies in the region); off the exact value only where equidistant
    centers tie with unequal boxes, a sub-quarter-cell effect confined
    to measure-zero ridges.  Zero on `others` itself.
    """
    from scipy import ndimage

    sp = dom.spacing
    _, idx = ndimage.distance_transform_edt(
        ~others, sampling=tuple(sp), return_indices=True
    )
    grids = np.indices(others.shape)
    acc = np.zeros(others.shape)
    for a in range(others.ndim):
        gap = (np.abs(idx[a] - grids[a]) - 0.5).clip(min=0.0) * sp[a]
        acc += gap * gap
    return np.where(others, 0.0, np.sqrt(acc))


def _interface_seeds(member, dom, gauge, outward):
    """Gauge distance to the nearest point of each stencil neighbor in
    the other region: per axis the center-to-cell gap is (|o| - 1/2)
    spacings.  A valid upper bound for any gauge (the gap endpoint lies
    in that cell), exact for coordinate-monotone ones, so the near field
    is lattice-exact and the far field error is purely the chamfer
    graph's.  outward=True seeds non-member cells against member
    neighbors with gauge(x - q); outward=False the reverse region and
    argument order.
    """
    dim = member.ndim
    seed = np.full(member.shape, np.inf)
    offs = OFFSETS_2D if dim == 2 else OFFSETS_3D
    x_region = ~member if outward else member
    y_region = member if outward else ~member
    for off in offs:
        gap = np.clip(np.abs(off) - 0.5, 0.0, None) * np.sign(off) * dom.spacing
        arg = (-gap if outward else gap)[None, :]
        cost = float(gauge.eval_many(arg)[0])
        src = [slice(None)] * dim
        dst = [slice(None)] * dim
        for a, o in enumerate(off):
            o = int(o)
            if o > 0:
                dst[a] = slice(None, -o)
                src[a] = slice(o, None)
            elif o < 0:
                dst[a] = slice(-o, None)
                src[a] = slice(None, o)
        hit = np.zeros_like(member)
        hit[tuple(dst)] = y_region[tuple(src)]
        sel = x_region & hit
        np.minimum(seed, np.where(sel, cost, np.inf), out=seed)
    return seed


def signed_distance_sweep(e: IndicatorField, psi_dual: Anisotropy) -> SignedDistance:
    """Chamfer (shortest lattice path) approximation of the signed distance.

    Runs two propagations: outward from the set boundary with edge cost
    g(step) and inward from the complement's with edge cost g(-step),
    matching the argument order of the definition.  Cells near the
    interface are seeded at their exact distance to neighboring
    other-region cells (the boundary runs along cell faces), own-region
    cells at zero.  Deterministic: the relaxation is iterated to its
    unique fixpoint.
    """
    _validate_set(e)
    dom = e.domain
    if psi_dual.dimension != dom.dim:
        raise ValueError("gauge dimension does not match the domain")
    mem = e.membership
    if psi_dual.kind == "euclidean":
        # lattice paths overestimate off-stencil directions by up to
        # ~2.4%, which the implicit step amplifies several-fold into the
        # front speed; the euclidean case has exact alternatives
        if dom.dim == 2:
            values = _euclid_interface_distance(e)
        else:
            values = _euclid_region_distance(mem, dom) - _euclid_region_distance(~mem, dom)
        return SignedDistance(ScalarField(dom, values), psi_dual, e)
    offsets = OFFSETS_2D if dom.dim == 2 else OFFSETS_3D
    steps = offsets.astype(np.float64) * dom.spacing[None, :]
    w_out = psi_dual.eval_many(steps)
    w_in = psi_dual.eval_many(-steps)
    backend = _kernels.get_backend()
    d_out = np.where(mem, 0.0, _interface_seeds(mem, dom, psi_dual, outward=True))
    d_in = np.where(~mem, 0.0, _interface_seeds(mem, dom, psi_dual, outward=False))
    _chamfer(d_out, offsets, w_out, backend)
    _chamfer(d_in, offsets, w_in, backend)
    return SignedDistance(ScalarField(dom, d_out - d_in), psi_dual, e)


def eikonal_residual(d: SignedDistance, psi: Anisotropy) -> ScalarField:
    """Per-cell |psi(grad d) - 1| away from the zero level (diagnostic).

    Cells within two gauge steps of the zero level carry no information
    and are reported as zero, as are the top boundary slices where the
    forward difference is truncated.
    """
    dom = d.domain
    g = grad_forward_array(d.values, dom.spacing)
    vals = psi.eval_many(g.reshape(-1, dom.dim)).reshape(dom.shape)
    res = np.abs(vals - 1.0)
    step = max(
        float(d.gauge.eval_many((np.eye(dom.dim) * dom.spacing[None, :])).max()),
        float(d.gauge.eval_many((-np.eye(dom.dim) * dom.spacing[None, :])).max()),
    )
    keep = np.abs(d.values) > 2.0 * step
    for a in range(dom.dim):
        sl = [slice(None)] * dom.dim
        sl[a] = slice(-1, None)
        keep[tuple(sl)] = False
    return ScalarField(dom, np.where(keep, res, 0.0))
