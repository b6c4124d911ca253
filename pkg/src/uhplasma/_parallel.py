"""Order-preserving parallel map over independent tasks."""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor


def default_workers() -> int:
    return os.cpu_count() or 1


def ordered_map(fn, tasks, workers: int | None = None):
    """``[fn(t) for t in tasks]``, optionally spread over worker processes.

    Results come back in task order regardless of completion order, so the
    output is identical for any worker count.
    """
    tasks = list(tasks)
    workers = default_workers() if workers is None else int(workers)
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as pool:
        return list(pool.map(fn, tasks))
