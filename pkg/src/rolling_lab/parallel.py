"""Fixed-size path blocks evaluated on a thread pool.

Block boundaries depend only on the path count, never on the worker count,
and results come back in block order, so any reduction over them is
independent of scheduling.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterator, Sequence, TypeVar

T = TypeVar("T")

BLOCK_SIZE = 128
THREADS_ENV = "ROLLING_LAB_THREADS"


def resolve_threads(threads: int | None = None) -> int:
    if threads is None:
        threads = int(os.environ.get(THREADS_ENV, "0") or 0)
    if threads < 0:
        raise ValueError("threads must be >= 0")
    return threads or (os.cpu_count() or 1)


def blocks(n_paths: int, size: int = BLOCK_SIZE, start: int = 0) -> list[range]:
    return [range(a, min(a + size, start + n_paths)) for a in range(start, start + n_paths, size)]


def map_blocks(fn: Callable[[range], T], parts: Sequence[range], threads: int | None = None) -> list[T]:
    workers = resolve_threads(threads)
    if workers == 1 or len(parts) <= 1:
        return [fn(b) for b in parts]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, parts))


def iter_blocks(fn: Callable[[range], T], parts: Sequence[range]) -> Iterator[T]:
    for b in parts:
        yield fn(b)
