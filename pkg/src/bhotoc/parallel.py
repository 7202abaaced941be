"""Fixed-block parallel map over sample indices.

Work is cut into blocks whose boundaries depend only on ``count``,
``offset`` and ``block``, never on the worker count, and results are
reassembled in index order.
"""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor

import numpy as np

DEFAULT_BLOCK = 256


def resolve_workers(workers: int | None) -> int:
    if workers is None or workers == 0:
        return os.cpu_count() or 1
    if workers < 0:
        raise ValueError(f"workers must be >= 0, got {workers}")
    return int(workers)


def blocks(count: int, offset: int = 0, block: int = DEFAULT_BLOCK):
    return [(offset + s, min(block, count - s)) for s in range(0, count, block)]


def map_blocks(func, count: int, offset: int = 0, workers: int = 1, block: int = DEFAULT_BLOCK):
    """Concatenate ``func(start, size)`` over all blocks along axis 0.

    ``func`` must be picklable when ``workers > 1``.
    """
    jobs = blocks(count, offset, block)
    workers = resolve_workers(workers)
    if workers == 1 or len(jobs) == 1:
        parts = [func(s, n) for s, n in jobs]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as ex:
            parts = list(ex.map(func, [s for s, _ in jobs], [n for _, n in jobs]))
    return np.concatenate(parts, axis=0)
