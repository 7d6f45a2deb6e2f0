"""
Spectral Flow Toolkit - Eigensystem Cache

Bounded in-memory cache of solved eigensystems. Exact tracking and the
estimator walk the same path samples, so the second pass reuses the first
pass's solves. Entries never expire (solves are deterministic); the oldest
entries are evicted once max_entries is reached.
"""

from dataclasses import dataclass
from itertools import count
from threading import Lock
from typing import Any, Generic, Hashable, Optional, TypeVar

T = TypeVar("T")


@dataclass
class CacheEntry(Generic[T]):
    """Single cache entry with metadata."""

    value: T
    serial: int
    hits: int = 0


class EigenCache:
    """
    Thread-safe keyed store for EigenSystem objects.

    Keys are tuples built by the dirac module from (connection fingerprint,
    cutoff, conserved mask, window, with-vectors, block selection).
    """

    def __init__(self, max_entries: int = 256):
        self._store: dict[Hashable, CacheEntry] = {}
        self._lock = Lock()
        self.max_entries = max_entries
        self._serial = count()

        # Stats
        self.hits = 0
        self.misses = 0

    def get(self, key: Hashable) -> Optional[Any]:
        with self._lock:
            entry = self._store.get(key)
            if entry is None:
                self.misses += 1
                return None
            entry.hits += 1
            self.hits += 1
            return entry.value

    def set(self, key: Hashable, value: Any) -> None:
        if self.max_entries <= 0:
            return
        with self._lock:
            if key not in self._store and len(self._store) >= self.max_entries:
                self._evict_oldest_locked(len(self._store) - self.max_entries + 1)
            self._store[key] = CacheEntry(value=value, serial=next(self._serial))

    def delete(self, key: Hashable) -> bool:
        with self._lock:
            return self._store.pop(key, None) is not None

    def clear(self) -> int:
        """Clear all entries. Returns count of cleared entries."""
        with self._lock:
            count = len(self._store)
            self._store.clear()
            return count

    def __len__(self) -> int:
        with self._lock:
            return len(self._store)

    def _evict_oldest_locked(self, count: int) -> None:
        """Remove oldest entries (must hold lock)."""
        if count <= 0:
            return
        oldest = sorted(self._store, key=lambda k: self._store[k].serial)
        for key in oldest[:count]:
            del self._store[key]

    def stats(self) -> dict:
        with self._lock:
            total_requests = self.hits + self.misses
            return {
                "entries": len(self._store),
                "max_entries": self.max_entries,
                "hits": self.hits,
                "misses": self.misses,
                "hit_rate": self.hits / total_requests if total_requests > 0 else 0,
            }


# Global instance
eigen_cache: Optional[EigenCache] = None


def init_eigen_cache(max_entries: int = 256) -> EigenCache:
    global eigen_cache
    eigen_cache = EigenCache(max_entries=max_entries)
    return eigen_cache


def get_eigen_cache() -> EigenCache:
    global eigen_cache
    if eigen_cache is None:
        eigen_cache = EigenCache()
    return eigen_cache
