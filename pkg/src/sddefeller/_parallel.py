"""Chunked, order-preserving replica execution."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

DEFAULT_CHUNK = 4096


def chunk_ranges(n: int, chunk: int = DEFAULT_CHUNK) -> list[tuple[int, int]]:
    chunk = max(1, int(chunk))
    return [(a, min(a + chunk, n)) for a in range(0, n, chunk)]


def map_ordered(fn, items, workers: int = 1) -> list:
    """``[fn(i) for i in items]``, optionally on a bounded thread pool; result order is input order."""
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
