"""Time the certificate update on a frozen iterate for several worker counts."""

import argparse
import os

from polyadmm.scenario import load_scenario
from polyadmm.sim import run_benchmark

HERE = os.path.dirname(os.path.abspath(__file__))


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--scenario", default=os.path.join(HERE, "..", "scenarios", "corridor.yaml"))
    ap.add_argument("--cells", type=int, nargs="+", default=[128, 512, 2048])
    ap.add_argument("--workers", type=int, nargs="+", default=[1, 2, 4, 8])
    ap.add_argument("--reps", type=int, default=10)
    args = ap.parse_args()

    scn = load_scenario(args.scenario)
    print(f"host cores: {os.cpu_count()}")
    print(f"{'NMT':>6}  {'workers':>7}  {'median_us':>10}  {'speedup':>7}")
    for n in args.cells:
        for r in run_benchmark(scn, args.workers, reps=args.reps, n_cells=n):
            print(f"{r['NMT']:>6}  {r['workers']:>7}  {r['median_us']:>10}  {r['speedup_vs_serial']:>7.2f}")


if __name__ == "__main__":
    main()
