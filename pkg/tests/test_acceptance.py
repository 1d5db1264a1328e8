"""Acceptance criteria, one test each; a PASS/FAIL line per criterion is
printed in the terminal summary (and immediately when run with -s)."""

import json
import math
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES, ROOT, benchmark_context, bumps
from oracles import radial_ground_state
from qlschrod.cli import main
from qlschrod.discretization import StatePair
from qlschrod.mountain_pass import SolverConfig, check_geometry, construct_endpoint, solve
from qlschrod.nonlinearity import HomogeneousQ
from qlschrod.penalization import Ball, PenalizedH, choose_a, seam_check, verify_H_bounds
from qlschrod.transform import DualTransform
from qlschrod.verify import decay_fit, map_back, penalization_consistency, verify_solution

pytestmark = pytest.mark.acceptance


def report(number, ok, elapsed, limit, detail):
    timing_ok = elapsed < limit
    status = "PASS" if ok and timing_ok else "FAIL"
    line = f"criterion {number}: {status} ({elapsed:.1f}s, limit {limit:g}s) {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)
    return ok and timing_ok


@pytest.fixture(scope="module")
def benchmark():
    ctx = benchmark_context(nodes=400)
    t0 = time.perf_counter()
    result = solve(ctx, SolverConfig())
    return ctx, result, time.perf_counter() - t0


@pytest.fixture(scope="module")
def benchmark_fine():
    ctx = benchmark_context(nodes=800)
    return ctx, solve(ctx, SolverConfig())


def test_criterion_1_transform_properties():
    t0 = time.perf_counter()
    T = DualTransform()
    t = np.random.default_rng(2024).uniform(-1e6, 1e6, 10_000)
    f, fp, _ = T.evaluate(t)
    a, af = np.abs(t), np.abs(f)
    slack = 1e-10
    checks = {
        "(2)": np.count_nonzero((np.abs(fp) > 1 + slack) | (af > a + slack * a)),
        "(5)": np.count_nonzero((af / 2 > a * fp * (1 + slack)) | (a * fp > af * (1 + slack))),
        "(6)": np.count_nonzero(af > 2 ** 0.25 * np.sqrt(a) * (1 + slack)),
        "(7)": np.count_nonzero((f * f / 2 > t * f * fp * (1 + slack)) | (t * f * fp > f * f * (1 + slack))),
        "(9)": np.count_nonzero(np.abs(f * fp) > 1 / math.sqrt(2) + slack),
    }
    s = np.sort(a)
    fs, fps, _ = T.evaluate(s)
    checks["(10)"] = sum(int(np.count_nonzero(np.diff(fs ** q * fps) < -slack * (fs[1:] ** q * fps[1:])))
                         for q in (1.5, 2.0, 3.0, 5.0))
    limit4 = abs(T.f(1e6) / 1e3 - 2 ** 0.25) / 2 ** 0.25
    back = T.t_of_f(f)
    abs_err = float(np.max(np.abs(back - t)))
    rel_err = float(np.max(np.abs(back - t) / np.maximum(1.0, a)))
    elapsed = time.perf_counter() - t0
    violations = sum(checks.values())
    ok = violations == 0 and limit4 <= 1e-2 and abs_err <= 1e-11
    detail = (f"violations={checks} limit(4)={limit4:.2e} round_trip_abs={abs_err:.2e} "
              f"(bound 1e-11) round_trip_rel={rel_err:.2e}")
    assert report(1, ok, elapsed, 5, detail), detail


def test_criterion_2_gradient_consistency():
    t0 = time.perf_counter()
    ctx = benchmark_context(nodes=400)
    g = ctx.grid
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(100):
        amp = 10 ** rng.uniform(-1, 0.6)
        s = StatePair(bumps(g, rng, amp=amp), bumps(g, rng, amp=amp))
        d = StatePair(bumps(g, rng, signed=True), bumps(g, rng, signed=True))
        h = 1e-6
        fd = (ctx.phi(StatePair(s.w + h * d.w, s.z + h * d.z))
              - ctx.phi(StatePair(s.w - h * d.w, s.z - h * d.z))) / (2 * h)
        an = ctx.pairing(ctx.phi_grad(s), d)
        worst = max(worst, abs(fd - an) / abs(an))
    elapsed = time.perf_counter() - t0
    detail = f"max relative error={worst:.2e} (bound 1e-5)"
    assert report(2, worst <= 1e-5, elapsed, 30, detail), detail


def test_criterion_3_penalization_bounds():
    t0 = time.perf_counter()
    q = HomogeneousQ.product()
    h = PenalizedH(q, choose_a(q, 1.0, 1.0), Ball(6.0), 1.0, 1.0)
    rep = verify_H_bounds(h, sample_count=10_000)
    seam = seam_check(h)
    seam_max = max(seam.max_value_jump, seam.max_derivative_mismatch, seam.max_grad_mismatch)
    elapsed = time.perf_counter() - t0
    ok = rep.ok and rep.max_excess["H1"] <= 1e-9 and seam_max <= 1e-4
    detail = (f"a={h.a} A={h.A:.6g} H1_max_rel={rep.max_excess['H1']:.2e} "
              f"violations={rep.violations} seam={seam_max:.2e}")
    assert report(3, ok, elapsed, 10, detail), detail


def test_criterion_4_geometry(benchmark):
    ctx, result, _ = benchmark
    t0 = time.perf_counter()
    endpoint, info = construct_endpoint(ctx)
    base = endpoint.scaled(1.0 / info["t_star"])
    alpha = check_geometry(ctx, 1.0, 64, 0, directions=[base])
    elapsed = time.perf_counter() - t0
    ok = alpha > 0 and ctx.phi(endpoint) <= 0 and result.energy >= alpha
    detail = (f"alpha={alpha:.4g} t*={info['t_star']:g} Phi(endpoint)={info['phi_endpoint']:.4g} "
              f"energy={result.energy:.6g}")
    assert report(4, ok, elapsed, 60, detail), detail


def test_criterion_5_benchmark(benchmark):
    ctx, result, elapsed = benchmark
    t0 = time.perf_counter()
    oracle = radial_ground_state()
    w, z = result.state.w, result.state.z
    sym = float(np.max(np.abs(w - z)) / np.max(np.abs(w)))
    u, v = map_back(ctx.transform, result.state)
    nontrivial = min(np.max(np.abs(w)), np.max(np.abs(z))) > 0
    positive = result.flags["positivity_ok"] and np.all(u >= 0) and np.all(v >= 0)
    amp_err = abs(w[0] - oracle["w0"]) / oracle["w0"]
    energy_err = abs(result.energy - oracle["energy"]) / oracle["energy"]
    elapsed += time.perf_counter() - t0
    ok = (result.converged and result.grad_norm <= 1e-8 and positive and nontrivial
          and sym <= 1e-6 and amp_err <= 1e-2 and energy_err <= 1e-2)
    detail = (f"grad_norm={result.grad_norm:.2e} w(0)={w[0]:.6g} oracle={oracle['w0']:.6g} "
              f"({amp_err:.2%}) energy={result.energy:.6g} oracle={oracle['energy']:.6g} "
              f"({energy_err:.2%}) |w-z|/|w|={sym:.1e}")
    assert report(5, ok, elapsed, 300, detail), detail


def test_criterion_6_recovery(benchmark, benchmark_fine):
    ctx, result, _ = benchmark
    t0 = time.perf_counter()
    rep = verify_solution(ctx, result.state, test_count=16)
    pen = penalization_consistency(result.state, ctx.transform, ctx.grid, ctx.h.omega, ctx.epsilon, ctx.h.a)
    elapsed = time.perf_counter() - t0
    fctx, fres = benchmark_fine
    fine = verify_solution(fctx, fres.state, test_count=16).weak_residual_max
    ok = pen["ok"] and rep.weak_residual_max <= 1e-3
    detail = (f"outside_sup={pen['outside_sup']:.3e} < a={ctx.h.a} ; weak defect "
              f"n=400: {rep.weak_residual_max:.3e} (bound 1e-3), n=800: {fine:.3e}")
    assert report(6, ok, elapsed, 60, detail), detail


def test_criterion_7_decay(benchmark, benchmark_fine):
    ctx, result, _ = benchmark
    t0 = time.perf_counter()
    rep = verify_solution(ctx, result.state)
    elapsed = time.perf_counter() - t0
    fctx, fres = benchmark_fine
    fine = verify_solution(fctx, fres.state)
    coarse_c = [rep.decay_C1, rep.decay_C2, rep.decay_C3, rep.decay_C4]
    fine_c = [fine.decay_C1, fine.decay_C2, fine.decay_C3, fine.decay_C4]
    drift = max(abs(a - b) / abs(b) for a, b in zip(coarse_c, fine_c))
    ok = rep.decay_fit_r2 >= 0.99 and rep.decay_C2 > 0 and rep.decay_C4 > 0 and drift <= 0.05
    detail = (f"r2={rep.decay_fit_r2:.5f} C1..C4={[round(c, 5) for c in coarse_c]} "
              f"n=800 drift={drift:.2%} (bound 5%)")
    assert report(7, ok, elapsed, 10, detail), detail


def test_criterion_8_epsilon_sweep(tmp_path):
    t0 = time.perf_counter()
    out = tmp_path / "sweep"
    main(["sweep", str(ROOT / "configs" / "sweep.json"), "--out", str(out)])
    elapsed = time.perf_counter() - t0
    trend = json.loads((out / "m_eps_trend.json").read_text())
    m = trend["boundary_max"]["scaled_domain"]
    ratio = trend["norm_ratio"]
    converged = all(json.loads(p.read_text())["converged"] for p in out.glob("eps_*/result.json"))
    ok = converged and m["trend_ok"] is True and ratio["no_increasing_trend"] is True
    detail = (f"m_eps={['%.3g' % x for x in m['m_eps']]} trend_ok={m['trend_ok']} ; "
              f"norm ratio={['%.4g' % x for x in ratio['ratio']]} "
              f"no_increasing_trend={ratio['no_increasing_trend']}")
    assert report(8, ok, elapsed, 1800, detail), detail


def test_criterion_9_determinism(tmp_path):
    t0 = time.perf_counter()
    cfg = str(ROOT / "configs" / "benchmark.json")
    dirs = [tmp_path / "a", tmp_path / "b"]
    for d in dirs:
        main(["solve", cfg, "--out", str(d)])
    files = sorted(p.relative_to(dirs[0]) for p in dirs[0].rglob("*.csv"))
    same = [(dirs[0] / f).read_bytes() == (dirs[1] / f).read_bytes() for f in files]
    elapsed = time.perf_counter() - t0
    ok = len(files) >= 3 and all(same)
    detail = f"{sum(same)}/{len(files)} CSV files bit-identical"
    assert report(9, ok, elapsed, 600, detail), detail


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q", "-s"]))
