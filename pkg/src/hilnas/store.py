"""Append-only JSON-lines trial store.

Each line is one record::

    {"schema": 1, "kind": "trial" | "bench", "ts": <unix seconds>,
     "host": <fingerprint>, "config_hash": <hex>, ...payload}

Records are never rewritten. A torn final line (crash mid-write) is dropped
and truncated away when the store is opened. Opening a store whose records
carry a different ``config_hash`` raises :class:`StoreConflictError`. One
process owns a store at a time through ``<path>.lock``; a ``readonly``
store takes no lock and never modifies the file.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from pathlib import Path

from filelock import FileLock, Timeout

SCHEMA_VERSION = 1


class StoreConflictError(RuntimeError):
    pass


def config_hash(obj) -> str:
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


class TrialStore:
    def __init__(self, path, config_hash: str, host: str = "", readonly: bool = False):
        self.path = Path(path)
        self.readonly = readonly
        if not readonly:
            self.path.parent.mkdir(parents=True, exist_ok=True)
        self.config_hash = config_hash
        self.host = host
        self._lock = None if readonly else FileLock(str(self.path) + ".lock")
        if self._lock is not None:
            try:
                self._lock.acquire(timeout=0)
            except Timeout:
                raise StoreConflictError(f"{self.path} is locked by another process") from None
        self.records = self._load()
        for r in self.records:
            if r.get("config_hash") != config_hash:
                self.close()
                raise StoreConflictError(
                    f"{self.path} was written under config {r.get('config_hash')}, current is {config_hash}")
        self._index = {}
        for r in self.records:
            if r["kind"] == "trial":
                self._index[(r["stage"], r["index"])] = r

    def _load(self) -> list[dict]:
        if not self.path.exists():
            return []
        raw = self.path.read_bytes()
        records, good_end, pos = [], 0, 0
        for line in raw.split(b"\n"):
            end = pos + len(line) + 1
            if end > len(raw):  # no trailing newline: torn write
                break
            if line.strip():
                try:
                    records.append(json.loads(line))
                except json.JSONDecodeError:
                    break
            good_end = end
            pos = end
        if good_end < len(raw) and not self.readonly:
            with open(self.path, "r+b") as fh:
                fh.truncate(good_end)
        return records

    def close(self):
        if self._lock is not None and self._lock.is_locked:
            self._lock.release()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def append(self, kind: str, payload: dict) -> dict:
        if self.readonly:
            raise PermissionError("store opened read-only")
        rec = {"schema": SCHEMA_VERSION, "kind": kind, "ts": time.time(), "host": self.host,
               "config_hash": self.config_hash, **payload}
        line = json.dumps(rec, sort_keys=True) + "\n"
        with open(self.path, "a", encoding="utf-8") as fh:
            fh.write(line)
            fh.flush()
            os.fsync(fh.fileno())
        self.records.append(rec)
        if kind == "trial":
            self._index[(rec["stage"], rec["index"])] = rec
        return rec

    def lookup(self, stage: int, index: int) -> dict | None:
        return self._index.get((stage, index))

    def trials(self, stage: int | None = None) -> list[dict]:
        return [r for r in self.records if r["kind"] == "trial" and (stage is None or r["stage"] == stage)]
