"""Content-addressed response cache persisted as an append-only JSONL file."""

from __future__ import annotations

import hashlib
import json
import threading
from pathlib import Path
from typing import Any, Callable


def cache_key(endpoint: str, model: str, body: dict) -> str:
    payload = json.dumps({"endpoint": endpoint, "model": model, "body": body}, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class ResponseCache:
    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path is not None else None
        self._data: dict[str, Any] = {}
        self._write_lock = threading.Lock()
        self._key_locks: dict[str, threading.Lock] = {}
        self._key_locks_guard = threading.Lock()
        if self.path is not None and self.path.exists():
            with self.path.open(encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if not line:
                        continue
                    try:
                        rec = json.loads(line)
                    except json.JSONDecodeError:
                        # torn final line from an interrupted run
                        continue
                    self._data[rec["key"]] = rec["response"]

    def __len__(self) -> int:
        return len(self._data)

    def __contains__(self, key: str) -> bool:
        return key in self._data

    def get(self, key: str) -> Any | None:
        return self._data.get(key)

    def put(self, key: str, response: Any) -> None:
        with self._write_lock:
            if key in self._data:
                return
            self._data[key] = response
            if self.path is not None:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                with self.path.open("a", encoding="utf-8") as fh:
                    fh.write(json.dumps({"key": key, "response": response}, sort_keys=True) + "\n")

    def _lock_for(self, key: str) -> threading.Lock:
        with self._key_locks_guard:
            lock = self._key_locks.get(key)
            if lock is None:
                lock = self._key_locks[key] = threading.Lock()
            return lock

    def get_or_compute(self, key: str, compute: Callable[[], Any]) -> Any:
        """Return the cached value, computing it at most once even under concurrent callers."""
        hit = self._data.get(key)
        if hit is not None:
            return hit
        with self._lock_for(key):
            hit = self._data.get(key)
            if hit is not None:
                return hit
            value = compute()
            self.put(key, value)
            return value
