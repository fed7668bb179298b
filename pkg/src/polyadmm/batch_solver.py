"""Deterministic batched execution of independent LCPs.

Workers receive disjoint contiguous slices of the index range (static block
partition, ``ceil(count / workers)`` items each), write into pre-assigned
output slots and never communicate. Each subproblem is solved by exactly one
sequential call, so results are bitwise identical for every backend.
"""

from __future__ import annotations

import collections
import csv
import math
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence

from .dual_subproblem import LcpProblem
from .lemke import LcpSolution, lemke_solve

WORKERS_ENV = "POLYADMM_WORKERS"
BENCH_HEADER = ["backend", "workers", "count", "n_max", "wall_time_us"]


@dataclass(frozen=True)
class Backend:
    kind: str = "serial"
    workers: int = 1

    def __post_init__(self):
        if self.kind not in ("serial", "parallel"):
            raise ValueError(f"unknown backend {self.kind!r}")
        if self.workers < 1:
            raise ValueError("worker count must be >= 1")

    @classmethod
    def serial(cls) -> "Backend":
        return cls("serial", 1)

    @classmethod
    def parallel(cls, workers: int) -> "Backend":
        return cls("parallel", workers)

    def __str__(self) -> str:
        return "serial" if self.kind == "serial" else f"parallel({self.workers})"


def default_workers() -> int:
    value = os.environ.get(WORKERS_ENV)
    if value:
        return max(1, int(value))
    return os.cpu_count() or 1


_pools: dict[int, ThreadPoolExecutor] = {}
_pools_lock = threading.Lock()


def _pool(workers: int) -> ThreadPoolExecutor:
    with _pools_lock:
        pool = _pools.get(workers)
        if pool is None:
            pool = ThreadPoolExecutor(max_workers=workers, thread_name_prefix="polyadmm")
            _pools[workers] = pool
        return pool


def block_partition(count: int, workers: int) -> list[range]:
    size = math.ceil(count / workers) if count else 0
    return [range(start, min(start + size, count)) for start in range(0, count, size)] if size else []


def parallel_map(fn: Callable[[Any], Any], items: Sequence[Any], backend: Backend) -> list[Any]:
    """Apply ``fn`` to every item; exceptions are stored in their slot, not raised."""
    out: list[Any] = [None] * len(items)

    def work(block: range) -> None:
        for k in block:
            try:
                out[k] = fn(items[k])
            except Exception as exc:  # isolation: one failure must not abort the batch
                out[k] = exc

    if backend.kind == "serial" or backend.workers == 1 or len(items) <= 1:
        work(range(len(items)))
        return out
    blocks = block_partition(len(items), backend.workers)
    futures = [_pool(backend.workers).submit(work, b) for b in blocks]
    for f in futures:
        f.result()
    return out


def parallel_for(fn: Callable[[int, int], None], count: int, backend: Backend) -> None:
    """Run ``fn(start, stop)`` over a static block partition of ``range(count)``.

    ``fn`` must write only to slots inside its own block.
    """
    if backend.kind == "serial" or backend.workers == 1 or count <= 1:
        fn(0, count)
        return
    futures = [_pool(backend.workers).submit(fn, b.start, b.stop) for b in block_partition(count, backend.workers)]
    for f in futures:
        f.result()


@dataclass
class BatchRequest:
    problems: list[LcpProblem]
    tags: list[tuple] | None = None
    backend: Backend = field(default_factory=Backend.serial)
    max_pivots: int | None = None

    def __post_init__(self):
        if self.tags is not None:
            if len(self.tags) != len(self.problems):
                raise ValueError("one tag per problem required")
            if len(set(self.tags)) != len(self.tags):
                raise ValueError("batch tags must be unique")


@dataclass
class BatchResult:
    solutions: list[LcpSolution | Exception]
    wall_time: float
    status_counts: dict[str, int]
    n_max: int = 0


def solve_batch(req: BatchRequest) -> BatchResult:
    def solve(p: LcpProblem) -> LcpSolution:
        return lemke_solve(p, req.max_pivots)

    start = time.perf_counter()
    sols = parallel_map(solve, req.problems, req.backend)
    wall = time.perf_counter() - start
    counts = collections.Counter(
        s.status.value if isinstance(s, LcpSolution) else "error" for s in sols
    )
    n_max = max((p.n for p in req.problems), default=0)
    return BatchResult(sols, wall, dict(counts), n_max)


def append_benchmark_record(path: str | Path, backend: Backend, result: BatchResult) -> None:
    """Append one ``backend,workers,count,n_max,wall_time_us`` row, writing the header once."""
    path = Path(path)
    new = not path.exists() or path.stat().st_size == 0
    with path.open("a", newline="") as fh:
        writer = csv.writer(fh)
        if new:
            writer.writerow(BENCH_HEADER)
        writer.writerow(
            [backend.kind, backend.workers, len(result.solutions), result.n_max, round(result.wall_time * 1e6)]
        )
