"""Deterministic fan-out of independent training/sampling cells.

``BMA_FORGE_WORKERS`` caps process parallelism; the default of 1 runs inline.
Results are always assembled in submission order, so worker count never
changes any output.
"""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, List, Sequence

WORKERS_ENV = "BMA_FORGE_WORKERS"


def worker_count() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        return 1
    return max(n, 1)


def ordered_map(fn: Callable, items: Sequence) -> List:
    """Apply ``fn`` to each item, in parallel when allowed, preserving order."""
    items = list(items)
    workers = worker_count()
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(fn, items))
