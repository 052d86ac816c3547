from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor


def default_threads() -> int:
    return os.cpu_count() or 1


def ordered_map(fn, items, threads=None):
    """``list(map(fn, items))``, optionally on a thread pool.

    Results come back in input order, so any reduction the caller does
    afterwards is independent of the worker count.
    """
    items = list(items)
    if not threads or threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def chunks(n, size):
    return [(start, min(start + size, n)) for start in range(0, n, size)]
