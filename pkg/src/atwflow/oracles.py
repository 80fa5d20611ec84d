"""Closed-form reference solutions used as ground truth by the test suite.

Everything in this module is exact arithmetic on polygons, radii and
paraboloids; nothing here touches the grid code.  The numerical pipeline is
measured against these evaluators, never the other way around.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

__all__ = [
    "cross_set",
    "cross_contains",
    "cross_volume",
    "cross_perimeter_l1",
    "cross_extinction",
    "cross_arrival",
    "calibration_field",
    "calibration_check",
    "shrinking_ball",
    "ball_extinction",
    "shrinking_square_l1",
    "square_extinction",
    "step_radius",
    "radius_sequence",
    "disk_bv_energy",
    "disk_family_arrival",
    "disk_family_generate",
    "OracleSolution",
    "oracle_for",
]


# ---------------------------------------------------------------------------
# Cross evolution under the crystalline l1 anisotropy pair.
#
# The cross with arm half-length A and arm half-width 1 is
# ([-1,1] x [-A,A]) u ([-A,A] x [-1,1]).  Arms retract inward at unit speed
# until only the central square is left; the square then shrinks self-similarly
# and vanishes in finite time.
# ---------------------------------------------------------------------------


def _cross_phases(t: float, L: float) -> tuple[str, float]:
    """Phase name and shape parameter at time t (arm extent or half-side)."""
    if t < 0:
        raise ValueError("time must be nonnegative")
    t1 = L - 1.0  # arms fully retracted
    if t <= t1:
        return "cross", L - t
    a2 = 1.0 - 2.0 * (t - t1)
    if a2 > 0.0:
        return "square", math.sqrt(a2)
    return "empty", 0.0


def cross_set(t: float, L: float = 2.0) -> np.ndarray:
    """Exact boundary polygon of the evolving cross at time t.

    Returns an (n, 2) array of vertices in counterclockwise order; an empty
    (0, 2) array once the set has vanished.
    """
    phase, p = _cross_phases(t, L)
    if phase == "empty":
        return np.zeros((0, 2))
    if phase == "square":
        a = p
        return np.array([(a, -a), (a, a), (-a, a), (-a, -a)], dtype=float)
    A = p
    if A == 1.0:
        return np.array([(1, -1), (1, 1), (-1, 1), (-1, -1)], dtype=float)
    return np.array(
        [
            (A, -1), (A, 1), (1, 1), (1, A), (-1, A), (-1, 1),
            (-A, 1), (-A, -1), (-1, -1), (-1, -A), (1, -A), (1, -1),
        ],
        dtype=float,
    )


def cross_contains(points: np.ndarray, t: float, L: float = 2.0) -> np.ndarray:
    """Closed-set membership test for cross_set(t), vectorized over points."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    x, y = pts[..., 0], pts[..., 1]
    m = np.maximum(np.abs(x), np.abs(y))
    mn = np.minimum(np.abs(x), np.abs(y))
    phase, p = _cross_phases(t, L)
    if phase == "empty":
        return np.zeros(m.shape, dtype=bool)
    if phase == "square":
        return m <= p
    return (mn <= 1.0) & (m <= p)


def cross_volume(t: float, L: float = 2.0) -> float:
    phase, p = _cross_phases(t, L)
    if phase == "empty":
        return 0.0
    if phase == "square":
        return 4.0 * p * p
    return 8.0 * p - 4.0


def cross_perimeter_l1(t: float, L: float = 2.0) -> float:
    """Anisotropic perimeter for unit-weight l1 surface tension."""
    phase, p = _cross_phases(t, L)
    if phase == "empty":
        return 0.0
    return 8.0 * p


def cross_extinction(L: float = 2.0) -> float:
    return (L - 1.0) + 0.5


def cross_arrival(x, y, L: float = 2.0):
    """Exact arrival time: the last time the point still belongs to the set.

    Vectorized; returns 0 outside the initial cross.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    m = np.maximum(np.abs(x), np.abs(y))
    mn = np.minimum(np.abs(x), np.abs(y))
    t1 = L - 1.0
    out = np.zeros(np.broadcast(x, y).shape)
    arm = (mn <= 1.0) & (m > 1.0) & (m <= L)
    out = np.where(arm, L - m, out)
    core = m <= 1.0
    out = np.where(core, t1 + 0.5 * (1.0 - m * m), out)
    if out.ndim == 0:
        return float(out)
    return out


# ---------------------------------------------------------------------------
# The explicit dual field certifying the cross evolution (l1 pair, L >= 1).
# Identity in the central square, components clamped to +-1 along the arms.
# Its divergence is 1 plus the indicator of the central square.
# ---------------------------------------------------------------------------


def calibration_field(points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Evaluate the certifying vector field and its divergence at points.

    Returns (z, div) with z of shape (n, 2) and div of shape (n,).  The
    divergence is exact: 2 in the closed central square, 1 in the arms.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    x, y = pts[:, 0], pts[:, 1]
    z = np.empty_like(pts)
    vert = (np.abs(y) > 1.0) & (np.abs(x) <= 1.0)
    horz = (np.abs(x) > 1.0) & (np.abs(y) <= 1.0)
    core = ~(vert | horz)
    z[:, 0] = np.where(horz, np.sign(x), x)
    z[:, 1] = np.where(vert, np.sign(y), y)
    div = np.where(core, 2.0, 1.0)
    return z, div


def calibration_check(points: np.ndarray, psi_dual=None, L: float = 2.0) -> dict:
    """Verify the dual-field identities at sample points inside the cross.

    psi_dual: gauge used to measure dual feasibility.  When None the
    max-component norm is used, which is the dual of unit-weight l1.
    Raises if any point lies outside the initial cross.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    inside = cross_contains(pts, 0.0, L=L)
    if not bool(np.all(inside)):
        raise ValueError("calibration_check: sample points must lie inside the cross")
    z, div = calibration_field(pts)
    x, y = pts[:, 0], pts[:, 1]
    core = (np.abs(x) <= 1.0) & (np.abs(y) <= 1.0)
    div_expected = np.where(core, 2.0, 1.0)
    if psi_dual is None:
        feas = np.max(np.abs(z), axis=1)
    else:
        feas = psi_dual.eval_many(z.T)
    max_feas = float(np.max(feas)) if len(feas) else 0.0
    div_exact = bool(np.array_equal(div, div_expected))
    return {
        "n_points": int(pts.shape[0]),
        "max_dual_eval": max_feas,
        "dual_feasible": bool(max_feas <= 1.0 + 1e-12),
        "div_exact": div_exact,
        "passed": div_exact and max_feas <= 1.0 + 1e-12,
    }


# ---------------------------------------------------------------------------
# Radially symmetric solutions.
# ---------------------------------------------------------------------------


def shrinking_ball(R0: float, t, dim: int = 2):
    """Radius at time t of a ball shrinking by isotropic mean curvature."""
    t = np.asarray(t, dtype=float)
    r2 = R0 * R0 - 2.0 * (dim - 1) * t
    out = np.sqrt(np.maximum(r2, 0.0))
    return float(out) if out.ndim == 0 else out


def ball_extinction(R0: float, dim: int = 2) -> float:
    if dim <= 1:
        return math.inf
    return R0 * R0 / (2.0 * (dim - 1))


def shrinking_square_l1(a0: float, t):
    """Half-side at time t of a square shrinking under the l1 pair."""
    t = np.asarray(t, dtype=float)
    a2 = a0 * a0 - 2.0 * t
    out = np.sqrt(np.maximum(a2, 0.0))
    return float(out) if out.ndim == 0 else out


def square_extinction(a0: float) -> float:
    return a0 * a0 / 2.0


def step_radius(R: float, h: float) -> float:
    """One implicit time step of the 2D isotropic radius law.

    The new radius r solves r = R - h/r (largest root); 0 once no positive
    root exists, which is the discrete extinction event.
    """
    disc = R * R - 4.0 * h
    if disc < 0.0:
        return 0.0
    return 0.5 * (R + math.sqrt(disc))


def radius_sequence(R0: float, h: float, n_steps: int) -> np.ndarray:
    """Radii after 0..n_steps implicit steps (clamped at extinction)."""
    out = np.empty(n_steps + 1)
    out[0] = R0
    r = R0
    for k in range(1, n_steps + 1):
        r = step_radius(r, h)
        out[k] = r
        if r == 0.0:
            out[k:] = 0.0
            break
    return out


def disk_bv_energy(R0: float = 1.0) -> float:
    """Exact total-variation energy of the disk arrival-time function.

    Integrating the perimeter of the shrinking disk over its lifetime gives
    (2 pi / 3) R0^3 in two dimensions.
    """
    return 2.0 * math.pi / 3.0 * R0 ** 3


# ---------------------------------------------------------------------------
# Disjoint disk families: arrival time and a greedy generator producing
# unions that stay uniformly outward-minimizing with a volume penalty.
# ---------------------------------------------------------------------------


def disk_family_arrival(points: np.ndarray, centers: np.ndarray, radii: np.ndarray):
    """Arrival time of a union of disjoint disks under isotropic flow.

    u(x) = (r_k^2 - |x - x_k|^2)/2 on the k-th disk, 0 outside all disks.
    At most one term is active because the disks are disjoint.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    centers = np.asarray(centers, dtype=float)
    radii = np.asarray(radii, dtype=float)
    if centers.ndim != 2 or centers.shape[0] != radii.shape[0]:
        raise ValueError("centers and radii must have matching leading length")
    for i in range(len(radii)):
        for j in range(i + 1, len(radii)):
            gap = np.linalg.norm(centers[i] - centers[j]) - radii[i] - radii[j]
            if gap <= 0.0:
                raise ValueError(f"overlapping disks {i} and {j}")
    u = np.zeros(pts.shape[0])
    for c, r in zip(centers, radii):
        d2 = np.sum((pts - c) ** 2, axis=1)
        u = np.maximum(u, 0.5 * np.maximum(r * r - d2, 0.0))
    return u if u.shape[0] > 1 else float(u[0])


def disk_family_generate(
    n_disks: int, seed: int = 0, delta: float = 0.5, omega_radius: float = 1.0
) -> tuple[np.ndarray, np.ndarray, float]:
    """Greedy finite family of disjoint disks in a ball-shaped domain.

    Every partial union is outward minimizing with volume-penalty constant
    delta.  New radii obey the damping rule
        r_{n+1} <= min( (1/n - 1/(n+1)) * delta * d_n^2 / (4 pi C), d_n / 6 )
    and r_{n+1} < 2^{-n}, where d_n is the distance from the candidate center
    to the current union and C = max(18/(pi - 2), 3(2 delta + 9)/2).  Centers
    too close to the union (d_n = 0) contribute nothing and are skipped over
    by drawing fresh candidates so that exactly n_disks disks are returned.
    Disks are also kept strictly inside the domain.
    """
    if n_disks < 1:
        raise ValueError("n_disks must be positive")
    C = max(18.0 / (math.pi - 2.0), 1.5 * (2.0 * delta + 9.0))
    rng = np.random.default_rng(seed)

    def draw_center() -> np.ndarray:
        while True:
            p = rng.uniform(-omega_radius, omega_radius, size=2)
            if np.hypot(p[0], p[1]) < 0.95 * omega_radius:
                return p

    centers: list[np.ndarray] = []
    radii: list[float] = []
    x1 = draw_center()
    r1 = min(0.4 * (omega_radius - np.hypot(x1[0], x1[1])), 0.5)
    centers.append(x1)
    radii.append(r1)
    n = 1
    attempts = 0
    while len(centers) < n_disks:
        attempts += 1
        if attempts > 10000 * n_disks:
            raise RuntimeError("disk_family_generate: could not place disks")
        x = draw_center()
        d_n = min(
            float(np.linalg.norm(x - c)) - r for c, r in zip(centers, radii)
        )
        if d_n <= 0.0:
            continue
        d_omega = omega_radius - float(np.hypot(x[0], x[1]))
        bound = min(
            0.5 * (1.0 / n - 1.0 / (n + 1)) * delta * d_n * d_n / (2.0 * math.pi * C),
            d_n / 6.0,
            0.999 * 2.0 ** (-n),
            0.5 * d_omega,
        )
        if bound <= 0.0:
            continue
        centers.append(x)
        radii.append(0.9 * bound)
        n += 1
    return np.array(centers), np.array(radii), delta


# ---------------------------------------------------------------------------
# Uniform oracle wrapper used by the refinement study and CLI probes.
# ---------------------------------------------------------------------------


@dataclass
class OracleSolution:
    """Bundle of closed-form evaluators for one scenario family."""

    kind: str
    params: dict = field(default_factory=dict)
    contains: Callable[[np.ndarray, float], np.ndarray] = None
    volume_at: Callable[[float], float] = None
    perimeter_at: Callable[[float], float] = None
    arrival: Callable[[np.ndarray], np.ndarray] = None
    extinction_time: Callable[[], float] = None


def oracle_for(kind: str, **params) -> OracleSolution:
    """Factory for the supported closed-form evolutions.

    Kinds: "cross" (L), "shrinking_ball" (R0, center, dim), "shrinking_square_l1"
    (a0), "disk_family" (centers, radii).
    """
    if kind == "cross":
        L = float(params.get("L", 2.0))
        return OracleSolution(
            kind=kind,
            params={"L": L},
            contains=lambda pts, t: cross_contains(pts, t, L=L),
            volume_at=lambda t: cross_volume(t, L=L),
            perimeter_at=lambda t: cross_perimeter_l1(t, L=L),
            arrival=lambda pts: cross_arrival(
                np.atleast_2d(pts)[:, 0], np.atleast_2d(pts)[:, 1], L=L
            ),
            extinction_time=lambda: cross_extinction(L=L),
        )
    if kind == "shrinking_ball":
        R0 = float(params["R0"])
        dim = int(params.get("dim", 2))
        center = np.asarray(params.get("center", np.zeros(dim)), dtype=float)

        def _contains(pts, t):
            pts = np.atleast_2d(np.asarray(pts, dtype=float))
            r = shrinking_ball(R0, t, dim=dim)
            if r <= 0.0:
                return np.zeros(pts.shape[0], dtype=bool)
            return np.sum((pts - center) ** 2, axis=1) <= r * r

        def _vol(t):
            r = shrinking_ball(R0, t, dim=dim)
            if dim == 2:
                return math.pi * r * r
            return 4.0 / 3.0 * math.pi * r ** 3

        def _per(t):
            r = shrinking_ball(R0, t, dim=dim)
            if dim == 2:
                return 2.0 * math.pi * r
            return 4.0 * math.pi * r * r

        def _arr(pts):
            pts = np.atleast_2d(np.asarray(pts, dtype=float))
            d2 = np.sum((pts - center) ** 2, axis=1)
            return np.maximum(R0 * R0 - d2, 0.0) / (2.0 * (dim - 1))

        return OracleSolution(
            kind=kind,
            params={"R0": R0, "dim": dim, "center": center},
            contains=_contains,
            volume_at=_vol,
            perimeter_at=_per,
            arrival=_arr,
            extinction_time=lambda: ball_extinction(R0, dim=dim),
        )
    if kind == "shrinking_square_l1":
        a0 = float(params["a0"])

        def _contains_sq(pts, t):
            pts = np.atleast_2d(np.asarray(pts, dtype=float))
            a = shrinking_square_l1(a0, t)
            if a <= 0.0:
                return np.zeros(pts.shape[0], dtype=bool)
            return np.max(np.abs(pts), axis=1) <= a

        return OracleSolution(
            kind=kind,
            params={"a0": a0},
            contains=_contains_sq,
            volume_at=lambda t: 4.0 * shrinking_square_l1(a0, t) ** 2,
            perimeter_at=lambda t: 8.0 * shrinking_square_l1(a0, t),
            arrival=lambda pts: 0.5
            * np.maximum(
                a0 * a0 - np.max(np.abs(np.atleast_2d(pts)), axis=1) ** 2, 0.0
            ),
            extinction_time=lambda: square_extinction(a0),
        )
    if kind == "disk_family":
        centers = np.asarray(params["centers"], dtype=float)
        radii = np.asarray(params["radii"], dtype=float)

        def _contains_f(pts, t):
            pts = np.atleast_2d(np.asarray(pts, dtype=float))
            out = np.zeros(pts.shape[0], dtype=bool)
            for c, r in zip(centers, radii):
                rt = shrinking_ball(r, t, dim=2)
                if rt > 0.0:
                    out |= np.sum((pts - c) ** 2, axis=1) <= rt * rt
            return out

        def _vol_f(t):
            return float(
                sum(math.pi * shrinking_ball(r, t, dim=2) ** 2 for r in radii)
            )

        def _per_f(t):
            return float(
                sum(2.0 * math.pi * shrinking_ball(r, t, dim=2) for r in radii)
            )

        return OracleSolution(
            kind=kind,
            params={"centers": centers, "radii": radii},
            contains=_contains_f,
            volume_at=_vol_f,
            perimeter_at=_per_f,
            arrival=lambda pts: np.atleast_1d(
                disk_family_arrival(pts, centers, radii)
            ),
            extinction_time=lambda: float(np.max(radii) ** 2 / 2.0),
        )
    raise ValueError(f"unknown oracle kind: {kind!r}")
