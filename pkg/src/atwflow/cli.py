"""Command line front end: scenario files, runs, checks, artifact emission.

Scenarios are JSON documents so that runs are reproducible artifacts.  All
emitted files (CSV trace, binary rasters, SVG contours, JSON reports) are
byte-deterministic for a fixed scenario and seed: floats are written with
repr round-tripping, JSON keys are sorted, and nothing records wall time.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import flow_engine as fe
from . import grid_fields as gf
from . import oracles
from ._kernels import set_worker_threads
from .anisotropy import Anisotropy
from .atw_solver import SolverConfig, atw_step
from .distance_transform import eikonal_residual, signed_distance_sweep
from .grid_fields import FrameViolation, GridDomain


class ScenarioError(ValueError):
    """Scenario file violates the documented schema."""


@dataclass
class Scenario:
    domain_origin: tuple
    domain_extent: tuple
    domain_cells: tuple
    shape_kind: str
    shape_params: dict
    phi: Anisotropy
    psi: Anisotropy
    h: float
    t_max: float = math.inf
    solver: SolverConfig = field(default_factory=SolverConfig)
    probes: tuple = ()
    output: str | None = None
    seed: int = 0
    oracle_kind: str | None = None
    oracle_params: dict = field(default_factory=dict)

    @property
    def psi_dual(self) -> Anisotropy:
        """Distance gauge: the polar of the mobility."""
        return self.psi.dual()

    def domain(self) -> GridDomain:
        return GridDomain(self.domain_origin, self.domain_extent, self.domain_cells)

    def initial_set(self) -> gf.IndicatorField:
        params = dict(self.shape_params)
        if self.shape_kind == "wulff":
            params["phi"] = self.phi
        return gf.shape(self.shape_kind, self.domain(), **params)


_TOP_KEYS = ("domain", "shape", "phi", "psi", "h", "t_max", "solver",
             "probes", "output", "seed")
_DOMAIN_KEYS = ("origin", "extent", "cells")
_SOLVER_KEYS = ("tol_gap", "max_iters", "level_tol", "primal_step", "dual_step")
_SHAPE_KEYS = {
    "ball": ("radius", "center"),
    "rectangle": ("lo", "hi"),
    "cross": ("arm_length",),
    "wulff": ("radius", "center"),
    "disk-union": ("centers", "radii"),
}
_GAUGE_KEYS = {
    "euclidean": ("dimension",),
    "weighted-l1": ("weights",),
    "l-infinity": ("weights",),
    "p-norm": ("p", "dimension"),
    "ellipse": ("matrix",),
    "polyhedral": ("directions", "offsets"),
    "shifted": ("base", "offset"),
}


def _line_of(text: str, key: str) -> int:
    """1-based line of the first occurrence of a JSON key, for error anchors."""
    idx = text.find(f'"{key}"')
    if idx < 0:
        return 1
    return text.count("\n", 0, idx) + 1


def _reject_unknown(obj: dict, allowed, text: str, path: str, where: str):
    for key in obj:
        if key not in allowed:
            raise ScenarioError(
                f"{path}:{_line_of(text, key)}: unknown key {key!r} in {where} "
                f"(allowed: {', '.join(allowed)})"
            )


def _parse_gauge(desc, text: str, path: str, dim: int) -> Anisotropy:
    if not isinstance(desc, dict) or "kind" not in desc:
        raise ScenarioError(f"{path}: anisotropy descriptor needs a 'kind'")
    kind = desc["kind"]
    if kind not in _GAUGE_KEYS:
        raise ScenarioError(
            f"{path}:{_line_of(text, kind)}: unknown anisotropy kind {kind!r} "
            f"(known: {', '.join(sorted(_GAUGE_KEYS))})"
        )
    _reject_unknown({k: v for k, v in desc.items() if k != "kind"},
                    _GAUGE_KEYS[kind], text, path, f"{kind} descriptor")
    if kind == "euclidean":
        return Anisotropy.euclidean(int(desc.get("dimension", dim)))
    if kind == "weighted-l1":
        return Anisotropy.weighted_l1(desc["weights"])
    if kind == "l-infinity":
        return Anisotropy.l_infinity(desc["weights"])
    if kind == "p-norm":
        return Anisotropy.p_norm(desc["p"], int(desc.get("dimension", dim)))
    if kind == "ellipse":
        return Anisotropy.ellipse(desc["matrix"])
    if kind == "polyhedral":
        return Anisotropy.polyhedral(desc["directions"], desc.get("offsets"))
    base = _parse_gauge(desc["base"], text, path, dim)
    return Anisotropy.shifted(base, desc["offset"])


def _oracle_of(shape_kind: str, params: dict, dim: int):
    """Closed-form reference evolution for the shapes that have one."""
    if shape_kind == "ball":
        center = params.get("center", tuple(0.0 for _ in range(dim)))
        return "shrinking_ball", {"R0": float(params["radius"]), "dim": dim,
                                  "center": tuple(center)}
    if shape_kind == "cross":
        return "cross", {"L": float(params.get("arm_length", 2.0))}
    if shape_kind == "rectangle":
        lo = np.asarray(params["lo"], dtype=float)
        hi = np.asarray(params["hi"], dtype=float)
        if np.allclose(lo, -hi) and np.allclose(hi, hi[0]):
            return "shrinking_square_l1", {"a0": float(hi[0])}
    if shape_kind == "disk-union":
        return "disk_family", {"centers": params["centers"],
                               "radii": params["radii"]}
    return None, {}


def parse_scenario(path: str) -> Scenario:
    """Load and validate a scenario JSON file (schema in the module docstring
    of this file and the README); unknown keys are rejected with the line of
    the offending key."""
    with open(path) as fh:
        text = fh.read()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}:{exc.lineno}: invalid JSON: {exc.msg}") from exc
    if not isinstance(raw, dict):
        raise ScenarioError(f"{path}:1: scenario must be a JSON object")
    _reject_unknown(raw, _TOP_KEYS, text, path, "scenario")

    for req in ("domain", "shape", "phi", "psi"):
        if req not in raw:
            raise ScenarioError(f"{path}: {req} required")
    if "h" not in raw:
        raise ScenarioError(f"{path}: h required")

    dom_spec = raw["domain"]
    _reject_unknown(dom_spec, _DOMAIN_KEYS, text, path, "domain")
    for req in _DOMAIN_KEYS:
        if req not in dom_spec:
            raise ScenarioError(f"{path}:{_line_of(text, 'domain')}: domain.{req} required")
    dim = len(dom_spec["cells"])

    shape_spec = dict(raw["shape"])
    kind = shape_spec.pop("kind", None)
    if kind not in _SHAPE_KEYS:
        raise ScenarioError(
            f"{path}:{_line_of(text, 'shape')}: unknown shape kind {kind!r} "
            f"(known: {', '.join(sorted(_SHAPE_KEYS))})"
        )
    _reject_unknown(shape_spec, _SHAPE_KEYS[kind], text, path, f"{kind} shape")

    h = float(raw["h"])
    if h <= 0.0:
        raise ScenarioError(f"{path}:{_line_of(text, 'h')}: h must be positive")
    t_max = float(raw.get("t_max", math.inf))
    probes = tuple(float(t) for t in raw.get("probes", ()))
    if any(t > t_max for t in probes):
        raise ScenarioError(f"{path}:{_line_of(text, 'probes')}: probe times exceed t_max")

    solver_spec = raw.get("solver", {})
    _reject_unknown(solver_spec, _SOLVER_KEYS, text, path, "solver")
    try:
        solver = SolverConfig(**solver_spec)
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"{path}:{_line_of(text, 'solver')}: bad solver config: {exc}") from exc

    phi = _parse_gauge(raw["phi"], text, path, dim)
    psi = _parse_gauge(raw["psi"], text, path, dim)
    oracle_kind, oracle_params = _oracle_of(kind, shape_spec, dim)

    scenario = Scenario(
        domain_origin=tuple(float(v) for v in dom_spec["origin"]),
        domain_extent=tuple(float(v) for v in dom_spec["extent"]),
        domain_cells=tuple(int(v) for v in dom_spec["cells"]),
        shape_kind=kind,
        shape_params=shape_spec,
        phi=phi,
        psi=psi,
        h=h,
        t_max=t_max,
        solver=solver,
        probes=probes,
        output=raw.get("output"),
        seed=int(raw.get("seed", 0)),
        oracle_kind=oracle_kind,
        oracle_params=oracle_params,
    )
    scenario.initial_set()  # validates shape params and frame clearance
    return scenario


# ----- emission helpers ------------------------------------------------------


def _f(x) -> str:
    """Shortest round-tripping decimal; bit-stable across runs."""
    return repr(float(x))


def write_trace_csv(path: str, trace: fe.FlowTrace):
    """One row per recorded step (the n = 0 row is the initial state)."""
    with open(path, "w", newline="\n") as fh:
        fh.write("n,t,volume,perimeter_phi,delta_certificate,residual\n")
        for s in trace.steps:
            fh.write(",".join([
                str(s.n), _f(s.n * trace.h), _f(s.volume), _f(s.perimeter),
                _f(s.delta_certificate), _f(s.residual),
            ]) + "\n")


def write_report(path: str, payload: dict):
    with open(path, "w", newline="\n") as fh:
        fh.write(json.dumps(payload, sort_keys=True, indent=2, allow_nan=True))
        fh.write("\n")


def write_contour_svg(path: str, polylines, domain: GridDomain):
    """Minimal SVG: one path per closed polyline, y axis flipped to screen...
    coordinates, fixed 640px width."""
    x0, y0 = domain.origin[0], domain.origin[1]
    w, hgt = domain.extent[0], domain.extent[1]
    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="640" '
        f'height="{_f(640 * hgt / w)}" viewBox="{_f(x0)} {_f(y0)} {_f(w)} {_f(hgt)}">',
        f'<g fill="none" stroke="black" stroke-width="{_f(0.004 * w)}">',
    ]
    for poly in polylines:
        pts = " L ".join(f"{_f(px)} {_f(y0 + hgt - (py - y0))}" for px, py in poly)
        lines.append(f'<path d="M {pts} Z"/>')
    lines.append("</g>")
    lines.append("</svg>")
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _outdir(args, scenario: Scenario | None = None) -> str:
    out = args.output or (scenario.output if scenario else None) or "."
    os.makedirs(out, exist_ok=True)
    return out


def _apply_workers(args):
    n = args.workers
    if n is None:
        env = os.environ.get("ATWFLOW_WORKERS")
        n = int(env) if env else None
    if n is not None:
        set_worker_threads(n)


# ----- subcommands -----------------------------------------------------------


def cmd_run(args) -> int:
    scenario = parse_scenario(args.scenario)
    _apply_workers(args)
    out = _outdir(args, scenario)
    e0 = scenario.initial_set()
    trace = fe.run_flow(e0, scenario.h, scenario.phi, scenario.psi_dual,
                        scenario.solver, t_max=scenario.t_max)
    write_trace_csv(os.path.join(out, "trace.csv"), trace)

    report = {
        "scenario": os.path.basename(args.scenario),
        "h": scenario.h,
        "n_steps": len(trace.steps) - 1,
        "extinction_step": trace.extinction_step,
        "extinction_time": (None if trace.extinction_step is None
                            else trace.extinction_step * trace.h),
        "aborted_at": trace.aborted_at,
        "final_volume": trace.steps[-1].volume,
        "probes": {},
    }
    certs = [s.delta_certificate for s in trace.steps[1:]]
    if certs:
        report["certificates"] = {"first": certs[0], "min": min(certs),
                                  "max": max(certs)}
    for t in scenario.probes:
        probe_set = trace.set_at(t)
        report["probes"][_f(t)] = {
            "volume": gf.volume(probe_set),
            "perimeter_phi": gf.perimeter_phi(probe_set, scenario.phi),
        }
        write_contour_svg(
            os.path.join(out, f"contour_t{t:.3f}.svg"),
            gf.contour_extract(probe_set), probe_set.domain,
        )
    if trace.extinct:
        u = fe.arrival_time(trace)
        gf.save_raster(os.path.join(out, "arrival.rst"), u.field)
        try:
            report["bv_energy"] = fe.bv_energy(u, scenario.phi)
        except fe.CoareaError as exc:
            report["coarea_error"] = str(exc)
    write_report(os.path.join(out, "report.json"), report)
    if trace.aborted_at is not None:
        print(f"aborted: step {trace.aborted_at} failed to certify", file=sys.stderr)
        return 1
    print(f"run complete: {len(trace.steps) - 1} steps -> {out}")
    return 0


def cmd_step(args) -> int:
    scenario = parse_scenario(args.scenario)
    _apply_workers(args)
    out = _outdir(args, scenario)
    e0 = scenario.initial_set()
    result = atw_step(e0, scenario.h, scenario.phi, scenario.psi_dual,
                      scenario.solver)
    gf.save_raster(os.path.join(out, "next_set.rst"), result.next_set)
    gf.save_raster(os.path.join(out, "w.rst"), result.w)
    write_contour_svg(os.path.join(out, "next_set.svg"),
                      gf.contour_extract(result.next_set), e0.domain)
    write_report(os.path.join(out, "step_report.json"), {
        "scenario": os.path.basename(args.scenario),
        "h": scenario.h,
        "residual": result.residual,
        "iterations": result.iterations,
        "delta_certificate": result.delta_certificate,
        "energy": result.energy,
        "volume_before": gf.volume(e0),
        "volume_after": gf.volume(result.next_set),
        "perimeter_before": gf.perimeter_phi(e0, scenario.phi),
        "perimeter_after": gf.perimeter_phi(result.next_set, scenario.phi),
    })
    certified = result.residual <= scenario.solver.tol_gap
    print(f"step: residual={result.residual:.3e} certified={certified}")
    return 0 if certified else 1


def cmd_distance(args) -> int:
    scenario = parse_scenario(args.scenario)
    _apply_workers(args)
    out = _outdir(args, scenario)
    e0 = scenario.initial_set()
    d = signed_distance_sweep(e0, scenario.psi_dual)
    gf.save_raster(os.path.join(out, "distance.rst"), d.field)
    res = eikonal_residual(d, scenario.psi)
    vals = res.values[res.values > 0.0]
    write_report(os.path.join(out, "distance_report.json"), {
        "scenario": os.path.basename(args.scenario),
        "min": float(d.values.min()),
        "max": float(d.values.max()),
        "eikonal_median": float(np.median(vals)) if vals.size else 0.0,
        "eikonal_max": float(vals.max()) if vals.size else 0.0,
    })
    print(f"distance written -> {out}")
    return 0


_PROPERTIES = ("mc-delta", "superharmonic", "lipschitz", "holder-volume")


def cmd_check(args) -> int:
    scenario = parse_scenario(args.scenario)
    _apply_workers(args)
    out = _outdir(args, scenario)
    seed = args.seed if args.seed is not None else scenario.seed
    prop = args.property
    e0 = scenario.initial_set()

    if prop == "mc-delta":
        first = atw_step(e0, scenario.h, scenario.phi, scenario.psi_dual,
                         scenario.solver)
        report = fe.check_mc_delta(e0, scenario.phi, first.delta_certificate,
                                   n_samples=100, seed=seed)
    else:
        trace = fe.run_flow(e0, scenario.h, scenario.phi, scenario.psi_dual,
                            scenario.solver, t_max=scenario.t_max)
        if prop == "holder-volume":
            report = fe.check_holder_volume(trace)
        else:
            u = fe.arrival_time(trace)
            delta = trace.steps[1].delta_certificate
            if prop == "superharmonic":
                report = fe.check_superharmonic(u, scenario.phi, n_samples=100,
                                                delta=delta, seed=seed)
            else:
                report = fe.check_lipschitz(u, scenario.psi_dual, delta,
                                            seed=seed)
    report["scenario"] = os.path.basename(args.scenario)
    report["seed"] = seed
    write_report(os.path.join(out, f"check_{prop}.json"), report)
    print(f"{prop}: {'PASS' if report['passed'] else 'FAIL'} "
          f"(worst margin {report.get('worst_margin', 'n/a')})")
    return 0 if report["passed"] else 1


def _polygon_vertices(kind: str, t: float, args) -> np.ndarray:
    if kind == "cross":
        return oracles.cross_set(t, L=args.L)
    if kind == "ball":
        r = oracles.shrinking_ball(args.R0, t)
        if r <= 0.0:
            return np.zeros((0, 2))
        ang = np.linspace(0.0, 2.0 * math.pi, 65)[:-1]
        return np.stack([r * np.cos(ang), r * np.sin(ang)], axis=1)
    a = oracles.shrinking_square_l1(args.a0, t)
    if a <= 0.0:
        return np.zeros((0, 2))
    return np.array([[-a, -a], [a, -a], [a, a], [-a, a]])


def cmd_oracle(args) -> int:
    verts = _polygon_vertices(args.kind, args.t, args)
    if args.emit == "json":
        print(json.dumps(
            {"kind": args.kind, "t": args.t,
             "vertices": [[float(x), float(y)] for x, y in verts]},
            sort_keys=True,
        ))
        return 0
    out = args.output or "."
    os.makedirs(out, exist_ok=True)
    if verts.shape[0]:
        lo = verts.min(axis=0) - 0.1
        hi = verts.max(axis=0) + 0.1
    else:
        lo, hi = np.array([-1.0, -1.0]), np.array([1.0, 1.0])
    dom = GridDomain(tuple(lo), tuple(hi - lo), (4, 4))
    path = os.path.join(out, f"oracle_{args.kind}_t{args.t:.3f}.svg")
    polys = [np.vstack([verts, verts[:1]])] if verts.shape[0] else []
    write_contour_svg(path, polys, dom)
    print(path)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="atwflow",
        description="Evolve mean-convex sets by anisotropic mean curvature "
                    "via minimizing movements; verify structural guarantees.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, scenario_required=True):
        p.add_argument("--scenario", required=scenario_required,
                       help="path to a scenario JSON file")
        p.add_argument("--output", default=None, help="output directory")
        p.add_argument("--workers", type=int, default=None,
                       help="kernel worker threads (fallback: ATWFLOW_WORKERS)")
        p.add_argument("--seed", type=int, default=None,
                       help="sampling seed override")

    p_run = sub.add_parser("run", help="iterate the flow to extinction or t_max")
    common(p_run)
    p_run.set_defaults(func=cmd_run)

    p_step = sub.add_parser("step", help="apply a single implicit step")
    common(p_step)
    p_step.set_defaults(func=cmd_step)

    p_dist = sub.add_parser("distance", help="signed gauge distance of the shape")
    common(p_dist)
    p_dist.set_defaults(func=cmd_distance)

    p_check = sub.add_parser("check", help="run a structural property check")
    common(p_check)
    p_check.add_argument("--property", required=True, choices=_PROPERTIES)
    p_check.set_defaults(func=cmd_check)

    p_or = sub.add_parser("oracle", help="emit a closed-form solution outline")
    p_or.add_argument("kind", choices=("cross", "ball", "square"))
    p_or.add_argument("--t", type=float, required=True, help="time to evaluate")
    p_or.add_argument("--emit", choices=("json", "svg"), default="json")
    p_or.add_argument("--output", default=None)
    p_or.add_argument("--L", type=float, default=2.0, help="cross arm length")
    p_or.add_argument("--R0", type=float, default=1.0, help="ball initial radius")
    p_or.add_argument("--a0", type=float, default=1.0, help="square half-side")
    p_or.set_defaults(func=cmd_oracle)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ScenarioError, FrameViolation, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
