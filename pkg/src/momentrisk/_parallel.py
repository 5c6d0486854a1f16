from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, TypeVar

T = TypeVar("T")
R = TypeVar("R")

# global cap set by the CLI --threads flag
MAX_THREADS = 1


def parallel_map(fn: Callable[[T], R], items: Iterable[T], threads: int | None = None) -> list[R]:
    """Order-preserving map, threaded when more than one worker is allowed."""
    items = list(items)
    n = MAX_THREADS if threads is None else threads
    n = max(1, min(n, len(items)))
    if n == 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))
