"""
In-memory store for simulation runs served over HTTP.
Runs are cached by (settings hash, strategy, seed) to avoid recomputing identical requests.
The store keeps at most ``max_runs`` runs, evicting the least recently used.
"""
import hashlib
import logging
import threading
import uuid
from collections import OrderedDict
from dataclasses import dataclass
from typing import Callable, Optional

from app.config import Settings, get_settings
from app.control import RunResult, Strategy
from app.errors import ConfigError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class StoredRun:
    run_id: str
    key: str
    strategy: Strategy
    seed: int
    result: RunResult


def cache_key(settings: Settings, strategy: Strategy, seed: int) -> str:
    """
    Stable key for a run request.

    Args:
        settings: Fully resolved settings of the run
        strategy: Strategy simulated
        seed: Master seed

    Returns:
        Hex digest identifying the request
    """
    payload = f"{settings.model_dump_json()}|{Strategy(strategy).value}|{seed}"
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class RunStore:
    """Thread-safe LRU run store.

    ``get_or_create`` runs at most one simulation per key at a time; concurrent
    requests for the same key wait for it and share the stored result.
    """

    def __init__(self, max_runs: int = 32):
        if max_runs < 1:
            raise ConfigError(f"max_runs must be at least 1, got {max_runs}")
        self.max_runs = max_runs
        self._runs: OrderedDict[str, StoredRun] = OrderedDict()
        self._by_key: dict[str, str] = {}
        self._lock = threading.Lock()
        # key -> (guard, number of callers holding or waiting for it)
        self._in_flight: dict[str, tuple[threading.Lock, int]] = {}

    def get(self, run_id: str) -> Optional[StoredRun]:
        with self._lock:
            stored = self._runs.get(run_id)
            if stored is not None:
                self._runs.move_to_end(run_id)
            return stored

    def lookup(self, key: str) -> Optional[StoredRun]:
        """Get a stored run by cache key if one exists."""
        with self._lock:
            run_id = self._by_key.get(key)
            if run_id is None:
                return None
            self._runs.move_to_end(run_id)
            return self._runs[run_id]

    def add(self, key: str, result: RunResult) -> StoredRun:
        stored = StoredRun(
            run_id=uuid.uuid4().hex[:12], key=key, strategy=result.strategy, seed=result.seed, result=result
        )
        with self._lock:
            previous = self._by_key.get(key)
            if previous is not None:
                self._runs.pop(previous, None)
            self._runs[stored.run_id] = stored
            self._by_key[key] = stored.run_id
            while len(self._runs) > self.max_runs:
                _, evicted = self._runs.popitem(last=False)
                self._by_key.pop(evicted.key, None)
                logger.info("Evicted run %s (%s, seed %d)", evicted.run_id, evicted.strategy.value, evicted.seed)
        return stored

    def get_or_create(self, key: str, compute: Callable[[], RunResult]) -> tuple[StoredRun, bool]:
        """
        Return the run stored under ``key``, computing it once if absent.

        Args:
            key: Cache key of the request
            compute: Produces the result when nothing is stored yet

        Returns:
            (stored run, whether it was served from the store)
        """
        with self._lock:
            guard, users = self._in_flight.get(key, (threading.Lock(), 0))
            self._in_flight[key] = (guard, users + 1)
        try:
            with guard:
                stored = self.lookup(key)
                if stored is not None:
                    return stored, True
                return self.add(key, compute()), False
        finally:
            with self._lock:
                guard, users = self._in_flight[key]
                if users == 1:
                    del self._in_flight[key]
                else:
                    self._in_flight[key] = (guard, users - 1)

    def delete(self, run_id: str) -> bool:
        with self._lock:
            stored = self._runs.pop(run_id, None)
            if stored is None:
                return False
            self._by_key.pop(stored.key, None)
            return True

    def list_runs(self) -> list[str]:
        with self._lock:
            return list(self._runs.keys())

    def clear(self) -> None:
        with self._lock:
            self._runs.clear()
            self._by_key.clear()


# Global run store instance
run_store = RunStore(max_runs=get_settings().max_stored_runs)
