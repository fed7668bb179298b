"""Command-line entry point: ``polyadmm run | verify | bench``."""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

from .batch_solver import WORKERS_ENV, Backend, default_workers
from .scenario import ScenarioError, TraceError, load_scenario
from .sim import VerificationError, plot_run, run_benchmark, run_simulation, verify_trace

BENCH_FIELDS = ["workers", "NMT", "n_max", "median_us", "speedup_vs_serial"]


def _worker_list(text: str) -> list[int]:
    try:
        values = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not values or min(values) < 1:
        raise argparse.ArgumentTypeError("worker counts must be >= 1")
    return values


def _backend(args) -> Backend:
    workers = args.workers if args.workers is not None else default_workers()
    if args.backend == "serial":
        return Backend.serial()
    return Backend.parallel(workers)


def cmd_run(args) -> int:
    scn = load_scenario(args.scenario)
    metrics, records = run_simulation(scn, _backend(args), args.sigma, args.trace)
    if args.plot:
        plot_run(scn, records, args.plot)
    print(f"scenario        {scn.name}")
    print(f"success         {metrics.success}")
    print(f"steps           {metrics.steps}")
    print(f"navigation_time {metrics.navigation_time:.2f} s")
    print(f"navigation_cost {metrics.navigation_cost:.4f}")
    print(f"min_scale       {metrics.min_scale_overall:.6f}")
    if metrics.collision_step is not None:
        print(f"collision at step {metrics.collision_step}")
    if metrics.per_step_solve_times:
        mean_ms = 1e3 * sum(metrics.per_step_solve_times) / len(metrics.per_step_solve_times)
        print(f"mean solve      {mean_ms:.2f} ms/step ({metrics.nonconverged_steps} steps not converged)")
    return 0 if metrics.success else 1


def cmd_verify(args) -> int:
    scn = load_scenario(args.scenario)
    report = verify_trace(args.trace, scn)
    print(f"pairs checked   {report.pairs_checked}")
    print(f"min scale       {report.min_scale:.6f}")
    print(f"violations      {len(report.violations)}")
    for step, i, j, alpha in report.violations[:20]:
        print(f"  step {step}: part {i} / obstacle {j}: scale {alpha:.6f}")
    return 0 if report.ok else 1


def cmd_bench(args) -> int:
    scn = load_scenario(args.scenario)
    workers = args.workers if args.workers is not None else sorted({1, default_workers()})
    records = run_benchmark(scn, workers, reps=args.reps, n_cells=args.cells)
    with Path(args.out).open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=BENCH_FIELDS)
        w.writeheader()
        w.writerows(records)
    for r in records:
        print(
            f"workers={r['workers']:<3d} NMT={r['NMT']:<5d} n_max={r['n_max']:<3d} "
            f"median={r['median_us']:>9d} us  speedup={r['speedup_vs_serial']:.2f}"
        )
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="polyadmm", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="simulate a scenario with receding-horizon MPC")
    run.add_argument("scenario")
    run.add_argument("--backend", choices=["serial", "parallel"], default="serial")
    run.add_argument("--workers", type=int, help=f"thread count (default ${WORKERS_ENV} or CPU count)")
    run.add_argument("--sigma", type=float, help="override the ADMM penalty")
    run.add_argument("--trace", help="write the per-step trace CSV here")
    run.add_argument("--plot", help="write a static trajectory plot (.svg/.png)")
    run.set_defaults(func=cmd_run)

    ver = sub.add_parser("verify", help="re-check a trace with the primal scale LP")
    ver.add_argument("trace")
    ver.add_argument("scenario")
    ver.set_defaults(func=cmd_verify)

    bench = sub.add_parser("bench", help="time the certificate update per worker count")
    bench.add_argument("scenario")
    bench.add_argument("--workers", type=_worker_list, help="comma-separated, e.g. 1,2,4,8")
    bench.add_argument("--out", required=True)
    bench.add_argument("--reps", type=int, default=10)
    bench.add_argument("--cells", type=int, help="pad with random obstacles to at least this many cells")
    bench.set_defaults(func=cmd_bench)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ScenarioError, TraceError, VerificationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
