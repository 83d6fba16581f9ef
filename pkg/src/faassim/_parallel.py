"""Process-pool fan-out for independent runs."""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor


def map_jobs(fn, tasks, jobs=1):
    """``[fn(t) for t in tasks]``, optionally across ``jobs`` worker processes.

    Results keep task order, so output never depends on ``jobs``.
    """
    tasks = list(tasks)
    if jobs is None or jobs <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as pool:
        return list(pool.map(fn, tasks))
