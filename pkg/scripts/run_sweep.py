"""Epsilon sweep with the class-2 potential; prints m_eps and the norm ratio.

    python3 scripts/run_sweep.py [--config configs/sweep.json] [--out runs/sweep]
"""

import argparse
import json
from pathlib import Path

from qlschrod.cli import main as cli_main

ROOT = Path(__file__).resolve().parent.parent


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=str(ROOT / "configs" / "sweep.json"))
    ap.add_argument("--out", default=str(ROOT / "runs" / "sweep"))
    args = ap.parse_args()
    code = cli_main(["sweep", args.config, "--out", args.out])
    trend = json.loads((Path(args.out) / "m_eps_trend.json").read_text())
    bm, nr = trend["boundary_max"], trend["norm_ratio"]
    print("eps      m_eps(Omega/eps)  m_eps(B_1/eps^2)  energy     |(w,z)|^2   ratio")
    for i, eps in enumerate(bm["epsilon"]):
        g = bm["growing_ball"]["m_eps"][i]
        print(f"{eps:<8g} {bm['scaled_domain']['m_eps'][i]:<17.4e} "
              f"{'beyond grid' if g is None else f'{g:.4e}':<17} "
              f"{nr['energy'][i]:<10.5f} {nr['x_norm_sq'][i]:<11.5f} {nr['ratio'][i]:.5e}")
    print(f"m_eps trend ok: {bm['scaled_domain']['trend_ok']}; "
          f"norm ratio without increasing trend: {nr['no_increasing_trend']}")
    return code


if __name__ == "__main__":
    raise SystemExit(main())
