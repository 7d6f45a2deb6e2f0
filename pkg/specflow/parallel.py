"""
Spectral Flow Toolkit - Worker Pool

Caps the number of worker threads used for per-block eigensolves and
per-sample path work. numpy's LAPACK calls release the GIL, so a thread
pool scales over blocks. Results are always returned in input order.
"""

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, Optional, TypeVar

from .errors import ConfigError

T = TypeVar("T")
R = TypeVar("R")

# Global worker cap (None until init_pool or first use)
max_workers: Optional[int] = None


def init_pool(threads: Optional[int] = None) -> int:
    """Set the worker cap; None means one worker per available core."""
    global max_workers
    if threads is not None and threads < 1:
        raise ConfigError(f"--threads must be >= 1, got {threads}")
    max_workers = threads if threads is not None else (os.cpu_count() or 1)
    return max_workers


def get_max_workers() -> int:
    global max_workers
    if max_workers is None:
        max_workers = os.cpu_count() or 1
    return max_workers


def parallel_map(fn: Callable[[T], R], items: Iterable[T]) -> list[R]:
    """Ordered map over the worker pool; runs inline for one worker or one item."""
    items = list(items)
    workers = min(get_max_workers(), len(items))
    if workers <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
