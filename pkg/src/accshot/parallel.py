"""Fixed-partition thread fan-out.

Work is always split into the same chunks regardless of the worker count
and every chunk writes a disjoint slice of the output, so results are
bitwise independent of ``workers``.
"""

import os
from concurrent.futures import ThreadPoolExecutor
from functools import lru_cache

WORKERS_ENV = "ACCSHOT_WORKERS"


def default_workers():
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


@lru_cache(maxsize=None)
def _pool(workers):
    return ThreadPoolExecutor(max_workers=workers, thread_name_prefix="accshot")


def chunks(n, size):
    return [(a, min(a + size, n)) for a in range(0, n, size)]


def run_chunks(fn, bounds, workers):
    """Call ``fn(a, b)`` for every chunk, in parallel when workers > 1."""
    if workers <= 1 or len(bounds) <= 1:
        for a, b in bounds:
            fn(a, b)
        return
    list(_pool(workers).map(lambda ab: fn(*ab), bounds))
