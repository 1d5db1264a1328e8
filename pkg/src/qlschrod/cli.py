"""Command line front end: preflight, solve, sweep, transform-table."""

from __future__ import annotations

import argparse
import json
import platform
import sys
import time
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .config import ConfigError, RunConfig
from .discretization import RadialGrid, field_csv
from .functional import FunctionalContext, geometry_exponent
from .mountain_pass import GeometryFailure, bump_profile, endpoint_bump_radius, solve, trace_csv
from .nonlinearity import check_hypotheses
from .penalization import seam_check, verify_H_bounds
from .transform import DualTransform, transform_table
from .verify import (ConfigurationError, boundary_max_sweep, decay_curve_csv, map_back,
                     verify_solution)


# preflight ------------------------------------------------------------------

def preflight(cfg: RunConfig) -> dict:
    """Hypotheses on Q, sampled bounds on H, smallness of A and grid sanity.

    ``hard_ok`` covers the two conditions a solve cannot start without: the
    range of p and A < min(W0, V0)/4.
    """
    q = cfg.q()
    h = cfg.penalized()
    hyp = check_hypotheses(q, seed=cfg.seed)
    bounds = verify_H_bounds(h, seed=cfg.seed)
    seam = seam_check(h)
    grid = cfg.grid()
    extent = grid.radius if isinstance(grid, RadialGrid) else grid.half_width
    omega_extent = getattr(h.omega, "radius", None) or h.omega.half_width
    per_eps = []
    for eps in cfg.epsilon_list:
        ctx = FunctionalContext.build(grid, *cfg.potentials(), h, eps)
        nodes = int(np.count_nonzero(bump_profile(grid, endpoint_bump_radius(ctx, cfg.solver().bump_fraction)) > 0))
        per_eps.append({"epsilon": eps, "omega_inside_grid": omega_extent / eps < extent,
                        "endpoint_bump_nodes": nodes, "endpoint_resolved": nodes >= 8})
    checks = {
        "Q0_range": bool(hyp.results["Q0"]),
        "hypotheses": hyp.ok,
        "smallness": bool(h.smallness_ok),
        "H_bounds": bounds.ok,
        "seam": seam.ok(1e-4),
        "geometry_exponent": geometry_exponent(cfg.dimension, q.p) > 2.0,
        "omega_inside_grid": all(e["omega_inside_grid"] for e in per_eps),
        "endpoint_resolved": all(e["endpoint_resolved"] for e in per_eps),
    }
    hard_ok = checks["Q0_range"] and checks["smallness"]
    return {"ok": all(checks.values()), "hard_ok": hard_ok, "checks": checks,
            "a": h.a, "A": h.A, "k": h.k, "hypotheses": hyp.to_dict(), "bounds": bounds.to_dict(),
            "seam": {"max_value_jump": seam.max_value_jump,
                     "max_derivative_mismatch": seam.max_derivative_mismatch,
                     "max_grad_mismatch": seam.max_grad_mismatch},
            "per_epsilon": per_eps,
            "grid": grid.describe()}


# solve ----------------------------------------------------------------------

def _eps_tag(eps: float) -> str:
    return f"eps_{eps:.6g}".replace(".", "p")


def run_epsilon(cfg: RunConfig, eps: float):
    """Solve and verify one epsilon.  Returns (MPResult or None, report dict, ctx)."""
    grid = cfg.grid()
    W, V = cfg.potentials()
    h = cfg.penalized()
    ctx = FunctionalContext.build(grid, W, V, h, eps)
    solver = cfg.solver()
    vcfg = cfg.verification()
    try:
        result = solve(ctx, solver)
    except GeometryFailure as exc:
        return None, {"epsilon": eps, "status": "geometry_failure", "error": str(exc), "ok": False}, ctx
    report = {"epsilon": eps, "status": result.status, "converged": result.converged,
              "result": result.summary(), "x_norm_sq": ctx.x_norm_sq(result.state)}
    try:
        ver = verify_solution(ctx, result.state, test_count=int(vcfg["test_functions"]), seed=cfg.seed,
                              weak_tolerance=float(vcfg["weak_tolerance"]), r2_min=float(vcfg["r2_min"]),
                              tail_fraction=float(vcfg["tail_fraction"]),
                              wall_layer=float(vcfg["wall_layer"]))
        report["verification"] = ver.to_dict()
        verified = ver.ok
    except ConfigurationError as exc:
        report["verification"] = {"ok": False, "error": str(exc)}
        verified = False
    positive = bool(result.flags.get("positivity_ok", False))
    nontrivial = min(float(np.max(np.abs(result.state.w))), float(np.max(np.abs(result.state.z)))) > 0
    ordered = result.energy >= result.alpha_estimate > 0
    report["checks"] = {"converged": result.converged, "positivity": positive,
                        "both_components_nontrivial": nontrivial, "energy_above_alpha": ordered,
                        "verification": verified}
    report["ok"] = all(report["checks"].values())
    return result, report, ctx


def _write(path: Path, text: str) -> None:
    path.write_text(text)


def _json(obj) -> str:
    def default(o):
        if isinstance(o, (np.floating, np.integer)):
            return o.item()
        if isinstance(o, np.bool_):
            return bool(o)
        raise TypeError(type(o).__name__)
    return json.dumps(obj, indent=2, sort_keys=True, default=default, allow_nan=True) + "\n"


def manifest_text(cfg: RunConfig, argv, overrides) -> str:
    lines = [
        f"package qlschrod {__version__}",
        f"python {platform.python_version()}",
        f"numpy {np.__version__}",
        f"scipy {scipy.__version__}",
        f"seed {cfg.seed}",
        f"config {cfg.source}",
        "arguments " + json.dumps(list(argv)),
        "overrides " + json.dumps([[k, v] for k, v in overrides]),
        "epsilon_list " + json.dumps(cfg.epsilon_list),
        "--- config ---",
        cfg.echo().rstrip("\n"),
    ]
    return "\n".join(lines) + "\n"


def norm_ratio_report(rows, dimension: int, tolerance: float) -> dict:
    """||(w,z)||^2 / (c + c^(2*/2)) per epsilon and whether it grows along the sweep."""
    half_star = dimension / (dimension - 2.0)
    ratios = [r["x_norm_sq"] / (r["energy"] + r["energy"] ** half_star) for r in rows]
    if len(ratios) < 2:
        trend = None
    else:
        trend = all(b <= (1.0 + tolerance) * a for a, b in zip(ratios, ratios[1:]))
    return {"epsilon": [r["epsilon"] for r in rows], "energy": [r["energy"] for r in rows],
            "x_norm_sq": [r["x_norm_sq"] for r in rows], "ratio": ratios,
            "C_fit": max(ratios) if ratios else None, "no_increasing_trend": trend}


def run_solve(cfg: RunConfig, out_dir: Path, argv=(), overrides=(), require_trend: bool = False,
              log=print) -> int:
    pre = preflight(cfg)
    out_dir.mkdir(parents=True, exist_ok=True)
    _write(out_dir / "preflight.json", _json(pre))
    _write(out_dir / "manifest.txt", manifest_text(cfg, argv, overrides))
    if not pre["hard_ok"]:
        log("preflight hard failure: " + ", ".join(k for k in ("Q0_range", "smallness") if not pre["checks"][k]))
        return 2
    all_ok = True
    states, rows = [], []
    for eps in cfg.epsilon_list:
        t0 = time.perf_counter()
        result, report, ctx = run_epsilon(cfg, eps)
        states.append((eps, None if result is None else result.state))
        sub = out_dir / _eps_tag(eps)
        sub.mkdir(exist_ok=True)
        _write(sub / "result.json", _json(report))
        if result is not None:
            _write(sub / "trace.csv", trace_csv(result.trace))
            u, v = map_back(ctx.transform, result.state)
            _write(sub / "fields.csv", field_csv(ctx.grid, {"w": result.state.w, "z": result.state.z,
                                                            "u": u, "v": v}))
            _write(sub / "decay.csv", decay_curve_csv(ctx.grid.radii, u, v))
            if "verification" in report:
                _write(sub / "verification.json", _json(report["verification"]))
            rows.append({"epsilon": eps, "energy": result.energy, "x_norm_sq": report["x_norm_sq"]})
        all_ok &= bool(report["ok"])
        log(f"epsilon={eps:g} status={report['status']} ok={report['ok']} "
            f"energy={report.get('result', {}).get('energy', float('nan')):.10g} "
            f"time={time.perf_counter() - t0:.1f}s")
        if "checks" in report:
            failed = [k for k, v in report["checks"].items() if not v]
            if failed:
                log("  failed checks: " + ", ".join(failed))
    if len(cfg.epsilon_list) > 1:
        h = cfg.penalized()
        omega_extent = getattr(h.omega, "radius", None) or h.omega.half_width
        trend = boundary_max_sweep(states, cfg.grid(), omega_extent, cfg.verification()["trend_tolerance"])
        ratio = norm_ratio_report(rows, cfg.dimension, cfg.verification()["trend_tolerance"])
        _write(out_dir / "m_eps_trend.json", _json({"boundary_max": trend, "norm_ratio": ratio}))
        if require_trend:
            trend_ok = trend["scaled_domain"]["trend_ok"] is True
            all_ok &= trend_ok and ratio["no_increasing_trend"] is True
            log(f"m_eps trend ok={trend_ok} norm ratio no_increasing_trend={ratio['no_increasing_trend']}")
    return 0 if all_ok else 1


# argument parsing -------------------------------------------------------------

def _parse_set(items):
    out = []
    for item in items or ():
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        try:
            value = json.loads(value)
        except json.JSONDecodeError:
            pass
        out.append((key, value))
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qlschrod", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preflight", help="check hypotheses and bounds for a config")
    p.add_argument("config")
    p.add_argument("--set", action="append", metavar="KEY=VALUE")

    for name, helptext in (("solve", "solve every epsilon of the config"),
                           ("sweep", "solve the epsilon list and check the epsilon trends")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("config")
        p.add_argument("--out", help="output directory (overrides output_dir)")
        p.add_argument("--set", action="append", metavar="KEY=VALUE")
        if name == "solve":
            p.add_argument("--epsilon", type=float, help="solve this single epsilon")

    p = sub.add_parser("transform-table", help="CSV table of f, f', f''")
    p.add_argument("--min", dest="t_min", type=float, required=True)
    p.add_argument("--max", dest="t_max", type=float, required=True)
    p.add_argument("--step", type=float, required=True)
    p.add_argument("--out")
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    try:
        if args.command == "transform-table":
            text = transform_table(DualTransform(), args.t_min, args.t_max, args.step)
            if args.out:
                Path(args.out).write_text(text)
            else:
                sys.stdout.write(text)
            return 0
        overrides = _parse_set(args.set)
        if getattr(args, "epsilon", None) is not None:
            overrides.append(("epsilon_list", [args.epsilon]))
        if getattr(args, "out", None):
            overrides.append(("output_dir", args.out))
        cfg = RunConfig.load(args.config, overrides)
        if args.command == "preflight":
            report = preflight(cfg)
            sys.stdout.write(_json(report))
            return 0 if report["ok"] else (2 if not report["hard_ok"] else 1)
        if args.command == "sweep" and len(cfg.epsilon_list) < 3:
            raise ConfigError("sweep needs at least three epsilon values")
        return run_solve(cfg, Path(cfg.output_dir), argv, overrides,
                         require_trend=args.command == "sweep")
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    raise SystemExit(main())
