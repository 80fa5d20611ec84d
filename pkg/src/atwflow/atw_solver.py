"""One implicit step of the anisotropic flow.

The step solves the quadratic level-set problem

    minimize  h * sum phi(grad w) * cellvol + 1/2 * sum (w - d)^2 * cellvol

with w held at the value of d on the two-cell domain frame, by an
accelerated primal-dual iteration, and thresholds the solution at zero
to obtain the next set.  The scaled dual field certifies optimality
(duality gap) and carries the divergence lower bound used by the
structure checks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from . import _kernels
from .anisotropy import Anisotropy
from .distance_transform import SignedDistance, signed_distance_sweep
from .grid_fields import (
    FRAME_WIDTH,
    FrameViolation,
    GridDomain,
    IndicatorField,
    ScalarField,
    VectorField,
    div_backward_array,
    grad_forward_array,
    perimeter_phi,
)

GAP_CHECK_EVERY = 25


@dataclass
class SolverConfig:
    """Primal-dual solver knobs.

    primal_step and dual_step are multiples of 1/||grad||; their product
    must stay <= 1 so that tau * sigma * ||grad||^2 <= 1.
    """

    tol_gap: float = 1e-7
    max_iters: int = 20000
    level_tol: float = 1e-9
    primal_step: float = 1.0
    dual_step: float = 1.0

    def __post_init__(self):
        if self.tol_gap <= 0 or self.max_iters < 1 or self.level_tol < 0:
            raise ValueError("tol_gap, max_iters, level_tol must be positive")
        if self.primal_step <= 0 or self.dual_step <= 0:
            raise ValueError("step multipliers must be positive")
        if self.primal_step * self.dual_step > 1.0 + 1e-12:
            raise ValueError("step-size product exceeds the gradient-norm bound")


@dataclass
class AtwStepResult:
    next_set: IndicatorField
    w: ScalarField
    z: VectorField
    residual: float
    iterations: int
    delta_certificate: float
    energy: float = field(default=0.0)


def _grad_norm_sq(spacing):
    return 4.0 * float((1.0 / np.asarray(spacing) ** 2).sum())


def _duality_gap(w, zeta, d, spacing, h, phi, cell_vol, interior):
    """Primal-dual gap, relative to the problem's energy scale.

    The denominator is floored at the quadratic data scale so that
    problems whose optimal value is (near) zero still certify.
    """
    g = grad_forward_array(w, spacing)
    dim = w.ndim
    phi_g = phi.eval_many(g.reshape(-1, dim)).reshape(w.shape)
    divz = div_backward_array(zeta, spacing)
    primal = h * phi_g.sum() * cell_vol + 0.5 * ((w - d)[interior] ** 2).sum() * cell_vol
    dual = -(d * divz).sum() * cell_vol - 0.5 * (divz[interior] ** 2).sum() * cell_vol
    pair = (g * zeta).sum(axis=-1)
    gap = (h * phi_g - pair).sum() * cell_vol
    gap += 0.5 * (((w - d - divz)[interior]) ** 2).sum() * cell_vol
    data_scale = 0.5 * (d[interior] ** 2).sum() * cell_vol
    denom = max(abs(primal) + abs(dual), data_scale)
    if denom == 0.0:
        return 0.0
    return gap / denom


_COARSEST_CELLS = 48


def _coarsen_2x(values):
    """Average over 2^dim cell blocks (all axes must be even)."""
    dim = values.ndim
    out = values
    for a in range(dim):
        shape = out.shape[:a] + (out.shape[a] // 2, 2) + out.shape[a + 1 :]
        out = out.reshape(shape).mean(axis=a + 1)
    return out


def _prolong_2x(values):
    dim = values.ndim
    out = values
    for a in range(dim):
        out = np.repeat(out, 2, axis=a)
    return out


def _cascade_init(d_values, spacing, h, phi, cfg):
    """Initial iterate from a solve on the 2x-coarsened grid.

    The correction w - d is smooth, so its nearest prolongation plus the
    fine-grid d is a good primal start; the prolonged dual is re-projected
    onto the feasible ball.  Falls back to the cold start (w = d, zeta = 0)
    on grids too small or odd-sized to coarsen.
    """
    dim = d_values.ndim
    if any(n % 2 != 0 or n < 2 * _COARSEST_CELLS for n in d_values.shape):
        return d_values.copy(), np.zeros(d_values.shape + (dim,))
    d_c = _coarsen_2x(d_values)
    spacing_c = np.asarray(spacing) * 2.0
    w_c, zeta_c, _, _ = _run_primal_dual(d_c, spacing_c, h, phi, cfg)
    w0 = d_values + _prolong_2x(w_c - d_c)
    zeta0 = np.stack([_prolong_2x(zeta_c[..., a]) for a in range(dim)], axis=-1)
    flat = zeta0.reshape(-1, dim)
    zeta0 = phi.project_dual_many(flat, h).reshape(zeta0.shape)
    fw = FRAME_WIDTH
    for a in range(dim):
        sl = [slice(None)] * dim
        sl[a] = slice(0, fw)
        w0[tuple(sl)] = d_values[tuple(sl)]
        sl[a] = slice(-fw, None)
        w0[tuple(sl)] = d_values[tuple(sl)]
    return w0, zeta0


def _run_primal_dual(d_values, spacing, h, phi, cfg):
    """Primal-dual loop with cascaded init; returns (w, zeta, relgap, iters).

    Warm starting across flow steps was tried and measured slower than the
    per-step cascade: the stale dual saturates the wrong constraint faces
    near the moved front and the iteration stalls in a slow oscillation.
    """
    dim = d_values.ndim
    cell_vol = float(np.prod(spacing))
    interior = tuple(slice(FRAME_WIDTH, -FRAME_WIDTH) for _ in range(dim))
    L = math.sqrt(_grad_norm_sq(spacing))
    tau = cfg.primal_step / L
    sigma = cfg.dual_step / L

    kind, arg = phi._solver_tag()
    if kind == "generic":
        arg = phi.project_dual_many

    backend = _kernels.get_backend()
    w, zeta = _cascade_init(d_values, spacing, h, phi, cfg)
    wbar = w.copy()

    best = None
    iters = 0
    period = GAP_CHECK_EVERY
    while iters < cfg.max_iters:
        n = min(period, cfg.max_iters - iters)
        tau, sigma = backend.cp_chunk(
            w, wbar, zeta, d_values, np.asarray(spacing, dtype=np.float64),
            h, tau, sigma, n, kind, arg, FRAME_WIDTH,
        )
        iters += n
        gap = _duality_gap(w, zeta, d_values, spacing, h, phi, cell_vol, interior)
        if best is None or gap < best[0]:
            best = (gap, w.copy(), zeta.copy(), iters)
        if gap <= cfg.tol_gap:
            break
        # far from the target the certificate is checked less often
        period = min(2 * period, 16 * GAP_CHECK_EVERY) if gap > 64.0 * cfg.tol_gap \
            else GAP_CHECK_EVERY
    gap, w, zeta, at = best
    return w, zeta, gap, at


def _solve_values(d_values, spacing, h, phi, cfg):
    return _run_primal_dual(d_values, spacing, h, phi, cfg)


def solve_w(d: SignedDistance, h, phi: Anisotropy, cfg: SolverConfig | None = None):
    """Solve the level-set problem on the full grid of d.

    Returns (w: ScalarField, z: VectorField, residual).  z is the dual
    field scaled back to the unit ball (dual_eval(z) <= 1); the optimality
    relation is w - d = h * div_backward(z).  If max_iters is exhausted the
    best iterate is returned and residual stays above cfg.tol_gap, which
    callers must treat as non-certified.
    """
    if cfg is None:
        cfg = SolverConfig()
    if h <= 0:
        raise ValueError("time step h must be positive")
    dom = d.domain
    w, zeta, gap, iters = _solve_values(d.values, dom.spacing, float(h), phi, cfg)
    z = VectorField(dom, zeta / float(h))
    return ScalarField(dom, w), z, gap


def threshold_set(w: ScalarField, cfg: SolverConfig | None = None,
                  smallest: bool = False) -> IndicatorField:
    """Zero sublevel set of w: {w <= level_tol}, or {w < -level_tol} if smallest.

    The default keeps tie cells (largest-minimizer convention).  A level set
    reaching the domain frame means the grid box was too small.
    """
    if cfg is None:
        cfg = SolverConfig()
    if smallest:
        mask = w.values < -cfg.level_tol
    else:
        mask = w.values <= cfg.level_tol
    return IndicatorField(w.domain, mask)


def atw_energy(f: IndicatorField, d: SignedDistance, h, phi: Anisotropy) -> float:
    """Step objective of a competitor set: P_phi(f) + (1/h) * integral of d over f."""
    vol = f.domain.cell_volume
    bulk = float(d.values[f.membership].sum()) * vol
    return perimeter_phi(f, phi) + bulk / float(h)


def _erode(mask, rounds):
    structure = ndimage.generate_binary_structure(mask.ndim, 1)
    return ndimage.binary_erosion(mask, structure=structure, iterations=rounds)


def _certificate(z_values, next_mask, spacing):
    """Clamped minimum of div z over the 2-cell interior of the next set."""
    if not next_mask.any():
        return 0.0
    divz = div_backward_array(z_values, spacing)
    core = _erode(next_mask, 2)
    if not core.any():
        core = next_mask
    return max(0.0, float(divz[core].min()))


def _window_margin(h, spacing):
    # covers both the boundary-layer width ~ sqrt(h) of w - d and the
    # inward motion of the set; FrameViolation retries catch the rest
    return max(8, math.ceil(3.0 * math.sqrt(2.0 * h) / float(np.min(spacing))) + 4)


def atw_step(e: IndicatorField, h, phi: Anisotropy, psi_dual: Anisotropy,
             cfg: SolverConfig | None = None) -> AtwStepResult:
    """One minimizing-movements step: distance, solve, threshold.

    The solve runs on a window around the current set (the far field is
    pinned to w = d, z = 0); the window grows and the solve repeats if the
    thresholded set reaches the window edge.  An empty input returns an
    empty result immediately.
    """
    if cfg is None:
        cfg = SolverConfig()
    if h <= 0:
        raise ValueError("time step h must be positive")
    dom = e.domain
    if e.is_empty():
        return AtwStepResult(
            next_set=IndicatorField.empty(dom),
            w=ScalarField(dom, np.zeros(dom.shape)),
            z=VectorField.zeros(dom),
            residual=0.0,
            iterations=0,
            delta_certificate=0.0,
            energy=0.0,
        )

    d = signed_distance_sweep(e, psi_dual)
    lo, hi = e.bbox()
    margin = _window_margin(h, dom.spacing)

    for _ in range(4):
        wlo = tuple(max(0, a - margin) for a in lo)
        whi = tuple(min(n, b + margin) for b, n in zip(hi, dom.cells))
        # even-sized windows coarsen cleanly in the solver's cascade
        sides = []
        for a, b, n in zip(wlo, whi, dom.cells):
            if (b - a) % 2 == 1:
                if b < n:
                    b += 1
                elif a > 0:
                    a -= 1
            sides.append((a, b))
        wlo = tuple(a for a, _ in sides)
        whi = tuple(b for _, b in sides)
        window = tuple(slice(a, b) for a, b in zip(wlo, whi))
        full_window = wlo == (0,) * dom.dim and whi == dom.cells

        w_sub, zeta_sub, gap, iters = _solve_values(
            np.ascontiguousarray(d.values[window]), dom.spacing, float(h), phi, cfg
        )
        next_sub = w_sub <= cfg.level_tol
        edge = np.zeros_like(next_sub)
        for a in range(dom.dim):
            sl = [slice(None)] * dom.dim
            sl[a] = slice(0, FRAME_WIDTH)
            edge[tuple(sl)] = True
            sl[a] = slice(-FRAME_WIDTH, None)
            edge[tuple(sl)] = True
        if (next_sub & edge).any():
            if full_window:
                raise FrameViolation(
                    "next set touches the domain frame; enlarge the box"
                )
            margin *= 2
            continue
        break
    else:
        raise FrameViolation("window expansion failed to contain the next set")

    w_full = d.values.copy()
    w_full[window] = w_sub
    z_full = np.zeros(dom.shape + (dom.dim,))
    z_full[window] = zeta_sub / float(h)
    next_mask = np.zeros(dom.shape, dtype=bool)
    next_mask[window] = next_sub

    next_set = IndicatorField(dom, next_mask)
    cert = _certificate(z_full, next_mask, dom.spacing)
    energy = atw_energy(next_set, d, h, phi)
    return AtwStepResult(
        next_set=next_set,
        w=ScalarField(dom, w_full),
        z=VectorField(dom, z_full),
        residual=gap,
        iterations=iters,
        delta_certificate=cert,
        energy=energy,
    )
