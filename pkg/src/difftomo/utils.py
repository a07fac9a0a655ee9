"""Deterministic thread-pool helpers.

Parallel reductions here are always over fixed-size chunks whose boundaries
do not depend on the worker count, and partial results are combined in chunk
order.  That makes every parallel code path in the package bit-identical
for any ``threads`` value.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence, TypeVar

T = TypeVar("T")

__all__ = ["fixed_chunks", "run_chunked", "run_indexed"]


def fixed_chunks(n: int, chunk_size: int = 16) -> list[range]:
    """Split ``range(n)`` into consecutive chunks of a fixed size."""
    if chunk_size < 1:
        raise ValueError(f"chunk_size must be >= 1, got {chunk_size!r}")
    return [range(i, min(i + chunk_size, n)) for i in range(0, n, chunk_size)]


def run_chunked(
    fn: Callable[[range], T], chunks: Sequence[range], threads: int
) -> list[T]:
    """Apply ``fn`` to every chunk, in parallel, returning results in order."""
    if threads <= 1 or len(chunks) <= 1:
        return [fn(c) for c in chunks]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, chunks))


def run_indexed(fn: Callable[[int], T], n: int, threads: int) -> list[T]:
    """Apply ``fn`` to 0..n-1, in parallel, returning results in index order."""
    if threads <= 1 or n <= 1:
        return [fn(i) for i in range(n)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(n)))
