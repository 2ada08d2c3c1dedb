"""Replica mapping for Monte Carlo ensembles.

Replicas are independent by construction (disjoint RNG streams derived
from the master seed and replica index), so they can run in any order on
any number of workers; results are always assembled in replica order so
every reduction is deterministic.
"""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor


def default_workers() -> int:
    return os.cpu_count() or 1


def map_replicas(fn, n_replicas: int, workers: int | None = None) -> list:
    """[fn(0), ..., fn(n_replicas - 1)], in replica order.

    `fn` must be picklable (a module-level function or functools.partial
    of one) when workers > 1.
    """
    if workers is None:
        workers = 1
    if workers <= 1 or n_replicas <= 1:
        return [fn(i) for i in range(n_replicas)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, range(n_replicas), chunksize=max(1, n_replicas // (8 * workers))))
