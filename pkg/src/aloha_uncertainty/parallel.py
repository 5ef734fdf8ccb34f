"""Order-preserving process pool used by sweeps and the optimizer grid."""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor

WORKERS_ENV = "ALOHA_UNCERTAINTY_WORKERS"


def worker_count(requested: int | None = None) -> int:
    """``requested`` if given, else $ALOHA_UNCERTAINTY_WORKERS, else all cores."""
    if requested is None:
        env = os.environ.get(WORKERS_ENV, "").strip()
        requested = int(env) if env else (os.cpu_count() or 1)
    return max(1, int(requested))


def pmap(fn, items, workers: int | None = None, chunksize: int = 1) -> list:
    """``list(map(fn, items))``, fanned out over processes when workers > 1."""
    items = list(items)
    n = min(worker_count(workers), len(items))
    if n <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items, chunksize=chunksize))
