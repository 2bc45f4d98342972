"""Deterministic replicate pools.

Each replicate draws from its own generator keyed by ``(seed, stream,
index)``, so results do not depend on how replicates are spread across
workers. Results are always returned in replicate order.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Sequence

import numpy as np

THREADS_ENV = "TRANSPORT_THREADS"


def replicate_rng(seed: int, index: int, stream: int = 0) -> np.random.Generator:
    return np.random.Generator(
        np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(int(stream), int(index))))
    )


def worker_count(requested: int | None = None) -> int:
    if requested is None:
        env = os.environ.get(THREADS_ENV)
        requested = int(env) if env else 1
    return max(1, int(requested))


def _run_chunk(func, indices):
    return [func(i) for i in indices]


def map_replicates(func: Callable[[int], object], n: int, workers: int | None = None) -> list:
    """``[func(i) for i in range(n)]``, optionally across worker processes.

    ``func`` must be picklable (a module-level function or ``functools.partial``)
    when more than one worker is used.
    """
    workers = min(worker_count(workers), max(n, 1))
    if workers == 1:
        return [func(i) for i in range(n)]
    chunks: Sequence[range] = [range(k, n, workers) for k in range(workers)]
    out: list = [None] * n
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(_run_chunk, func, list(c)) for c in chunks]
        for chunk, fut in zip(chunks, futures):
            for i, result in zip(chunk, fut.result()):
                out[i] = result
    return out
