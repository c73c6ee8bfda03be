"""Order-preserving parallel map capped by ``EQUILEARN_THREADS``."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, TypeVar

T = TypeVar("T")
R = TypeVar("R")


def thread_count() -> int:
    raw = os.environ.get("EQUILEARN_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def pmap(fn: Callable[[T], R], items: Iterable[T]) -> list[R]:
    items = list(items)
    workers = min(thread_count(), len(items))
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
