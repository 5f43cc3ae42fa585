"""Ordered worker pool shared by the batch drivers."""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Sequence


def ordered_map(fn: Callable, items: Sequence, workers: int = 1,
                initializer: Callable | None = None, initargs: tuple = ()) -> list:
    """``[fn(x) for x in items]``, optionally across ``workers`` processes.

    ``initializer(*initargs)`` runs once per worker (or once in-process when
    ``workers == 1``) so large read-only state is shipped once, not per item.
    """
    if workers < 1:
        raise ValueError("workers must be >= 1")
    if not items:
        return []
    if workers == 1:
        if initializer is not None:
            initializer(*initargs)
        return [fn(x) for x in items]
    chunksize = max(1, len(items) // (workers * 4))
    with ProcessPoolExecutor(max_workers=workers, initializer=initializer, initargs=initargs) as pool:
        return list(pool.map(fn, items, chunksize=chunksize))
