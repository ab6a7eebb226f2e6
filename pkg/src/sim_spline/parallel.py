"""Order-preserving map over independent tasks, optionally across processes."""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, Optional

from threadpoolctl import threadpool_limits

THREADS_ENV = "SIM_SPLINE_THREADS"


def resolve_threads(threads: Optional[int] = None) -> int:
    """Explicit value, else ``$SIM_SPLINE_THREADS``, else all cores."""
    if threads is None:
        env = os.environ.get(THREADS_ENV)
        threads = int(env) if env else (os.cpu_count() or 1)
    threads = int(threads)
    if threads < 1:
        raise ValueError("threads must be >= 1")
    return threads


def _single_blas(fn, arg):
    # one BLAS thread everywhere so results do not depend on the worker layout
    with threadpool_limits(limits=1):
        return fn(arg)


def parallel_map(fn: Callable, tasks: Iterable, threads: Optional[int] = 1) -> list:
    """``[fn(t) for t in tasks]`` with results in task order.

    ``fn`` must be a module-level function when ``threads > 1``.
    """
    tasks = list(tasks)
    threads = resolve_threads(threads)
    if threads == 1 or len(tasks) < 2:
        return [_single_blas(fn, t) for t in tasks]
    with ProcessPoolExecutor(max_workers=min(threads, len(tasks))) as pool:
        return list(pool.map(_single_blas, [fn] * len(tasks), tasks,
                             chunksize=max(1, len(tasks) // (4 * threads))))
