"""Seeded randomized campaign: 2D double integrator among 8 boxes per run."""

import argparse

import numpy as np

from polyadmm.batch_solver import Backend
from polyadmm.campaign import run_campaign


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--runs", type=int, default=20)
    ap.add_argument("--first-seed", type=int, default=0)
    ap.add_argument("--obstacles", type=int, default=8)
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()

    backend = Backend.serial() if args.workers == 1 else Backend.parallel(args.workers)
    seeds = range(args.first_seed, args.first_seed + args.runs)
    summary = run_campaign(seeds, backend, n_obstacles=args.obstacles)

    print(f"{'seed':>4}  {'success':>7}  {'time_s':>6}  {'cost':>9}  {'min_scale':>9}  {'ms/step':>7}")
    for r in summary.runs:
        m = r.metrics
        ms = 1e3 * np.mean(m.per_step_solve_times) if m.per_step_solve_times else float("nan")
        print(
            f"{r.seed:>4}  {str(m.success):>7}  {m.navigation_time:>6.1f}  {m.navigation_cost:>9.2f}  "
            f"{r.verification.min_scale:>9.4f}  {ms:>7.2f}"
        )
    print(f"success rate {summary.success_rate:.0%}")
    print(f"verified collisions among successes {summary.verified_collisions_among_successes}")


if __name__ == "__main__":
    main()
