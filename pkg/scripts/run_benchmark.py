"""Benchmark solve on a ladder of grids, compared with the radial shooting oracle.

Prints one row per grid: energy, central amplitude, weak-form defect, decay
rate and wall time, plus the observed order of the weak defect.

    python3 scripts/run_benchmark.py [--nodes 200 400 800] [--csv out.csv]
"""

import argparse
import csv
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "tests"))

from oracles import radial_ground_state  # noqa: E402
from qlschrod.discretization import PotentialSpec, RadialGrid  # noqa: E402
from qlschrod.functional import FunctionalContext  # noqa: E402
from qlschrod.mountain_pass import SolverConfig, solve  # noqa: E402
from qlschrod.nonlinearity import HomogeneousQ  # noqa: E402
from qlschrod.penalization import Ball, PenalizedH, choose_a  # noqa: E402
from qlschrod.verify import verify_solution  # noqa: E402


def run(nodes):
    q = HomogeneousQ.product()
    one = PotentialSpec("constant", 1.0)
    h = PenalizedH(q, choose_a(q, 1.0, 1.0), Ball(6.0), 1.0, 1.0)
    ctx = FunctionalContext.build(RadialGrid(3, 20.0, nodes), one, one, h, 1.0)
    t0 = time.perf_counter()
    res = solve(ctx, SolverConfig())
    elapsed = time.perf_counter() - t0
    rep = verify_solution(ctx, res.state)
    return {"nodes": nodes, "energy": res.energy, "w0": float(res.state.w[0]),
            "grad_norm": res.grad_norm, "weak_defect": rep.weak_residual_max,
            "outside_sup": rep.outside_sup, "decay_C2": rep.decay_C2, "r2": rep.decay_fit_r2,
            "seconds": elapsed}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--nodes", type=int, nargs="+", default=[200, 400, 800])
    ap.add_argument("--csv")
    args = ap.parse_args()
    oracle = radial_ground_state()
    print(f"oracle: w(0)={oracle['w0']:.8g} u(0)={oracle['u0']:.8g} energy={oracle['energy']:.8g}")
    rows = [run(n) for n in args.nodes]
    header = "nodes  energy      rel.err   w(0)       rel.err   weak_defect  C2       r2        time"
    print(header)
    for r in rows:
        print(f"{r['nodes']:5d}  {r['energy']:.7f}  {abs(r['energy'] / oracle['energy'] - 1):.2e}  "
              f"{r['w0']:.6f}  {abs(r['w0'] / oracle['w0'] - 1):.2e}  {r['weak_defect']:.3e}    "
              f"{r['decay_C2']:.5f}  {r['r2']:.5f}  {r['seconds']:.1f}s")
    for a, b in zip(rows, rows[1:]):
        print(f"weak defect ratio n={a['nodes']} -> {b['nodes']}: {a['weak_defect'] / b['weak_defect']:.3f}")
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
            writer.writeheader()
            writer.writerows(rows)


if __name__ == "__main__":
    main()
