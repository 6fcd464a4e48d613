"""Master-side chunk lifecycle ledger.

Every chunk moves Pending -> Sent -> (Done | Deleted); a worker loss
returns its Sent chunks to Pending with an attempt count, and chunks that
exhaust max_attempts become Failed.  All transitions are atomic under one
lock, and terminal states are first-writer-wins (duplicate results from a
re-sent chunk are ignored).
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass

from .audio import ChunkId
from .errors import UnknownWorker

PENDING = "pending"
SENT = "sent"
DONE = "done"
DELETED = "deleted"
FAILED = "failed"

TERMINAL = (DONE, DELETED, FAILED)


@dataclass
class _Entry:
    chunk_id: ChunkId
    payload: bytes | None
    state: str = PENDING
    attempts: int = 0
    worker: str | None = None
    sent_at: float = 0.0


@dataclass
class _WorkerStats:
    threads: int = 1
    granted: int = 0
    completed: int = 0
    deleted: int = 0
    bytes_in: int = 0
    bytes_out: int = 0
    busy_ms: float = 0.0


class WorkTracker:
    def __init__(self, max_attempts: int = 3):
        self.max_attempts = max_attempts
        self._lock = threading.Lock()
        self._entries: dict[tuple, _Entry] = {}
        self._order: list[tuple] = []
        self._workers: dict[str, _WorkerStats] = {}
        self.requeue_events = 0
        self.loading_done = False

    # -- setup -------------------------------------------------------------

    def add(self, chunk_id: ChunkId, payload: bytes) -> None:
        with self._lock:
            key = chunk_id.key()
            if key in self._entries:
                raise ValueError(f"duplicate chunk {chunk_id}")
            self._entries[key] = _Entry(chunk_id, payload)
            self._order.append(key)

    def register_worker(self, name: str, threads: int = 1) -> None:
        with self._lock:
            self._workers.setdefault(name, _WorkerStats(threads=threads))

    def finish_loading(self) -> None:
        with self._lock:
            self.loading_done = True

    # -- transitions -------------------------------------------------------

    def grant(self, worker: str, n: int) -> list[tuple[ChunkId, bytes]]:
        """Up to n Pending chunks become Sent(worker), FIFO."""
        with self._lock:
            stats = self._workers.get(worker)
            if stats is None:
                raise UnknownWorker(worker)
            out = []
            for key in self._order:
                if len(out) >= n:
                    break
                e = self._entries[key]
                if e.state == PENDING:
                    e.state = SENT
                    e.worker = worker
                    e.sent_at = time.monotonic()
                    stats.granted += 1
                    out.append((e.chunk_id, e.payload))
            return out

    def complete(self, chunk_id: ChunkId, worker: str) -> bool:
        """Mark Done; returns False if the chunk was already terminal."""
        return self._terminal(chunk_id, worker, DONE)

    def delete(self, chunk_id: ChunkId, worker: str) -> bool:
        return self._terminal(chunk_id, worker, DELETED)

    def _terminal(self, chunk_id: ChunkId, worker: str, state: str) -> bool:
        with self._lock:
            e = self._entries.get(chunk_id.key())
            if e is None or e.state in TERMINAL:
                return False
            e.state = state
            e.worker = worker
            e.payload = None
            stats = self._workers.get(worker)
            if stats is not None:
                if state == DONE:
                    stats.completed += 1
                else:
                    stats.deleted += 1
            return True

    def requeue_worker(self, worker: str) -> int:
        """Return the lost worker's Sent chunks to Pending."""
        with self._lock:
            if worker not in self._workers:
                raise UnknownWorker(worker)
            count = 0
            for e in self._entries.values():
                if e.state == SENT and e.worker == worker:
                    e.attempts += 1
                    e.worker = None
                    if e.attempts >= self.max_attempts:
                        e.state = FAILED
                        e.payload = None
                    else:
                        e.state = PENDING
                    count += 1
            if count:
                self.requeue_events += 1
            return count

    # -- queries -----------------------------------------------------------

    def counts(self) -> dict[str, int]:
        with self._lock:
            out = {PENDING: 0, SENT: 0, DONE: 0, DELETED: 0, FAILED: 0}
            for e in self._entries.values():
                out[e.state] += 1
            return out

    def all_terminal(self) -> bool:
        with self._lock:
            return self.loading_done and all(
                e.state in TERMINAL for e in self._entries.values())

    def worker_stats(self) -> dict[str, _WorkerStats]:
        with self._lock:
            return dict(self._workers)

    def add_worker_io(self, worker: str, bytes_in: int = 0,
                      bytes_out: int = 0, busy_ms: float = 0.0) -> None:
        with self._lock:
            stats = self._workers.get(worker)
            if stats is not None:
                stats.bytes_in += bytes_in
                stats.bytes_out += bytes_out
                stats.busy_ms += busy_ms

    def check_invariants(self) -> None:
        """Raise AssertionError on any ledger inconsistency (test hook)."""
        with self._lock:
            sent_by: dict[tuple, str] = {}
            for key, e in self._entries.items():
                assert e.state in (PENDING, SENT, DONE, DELETED, FAILED)
                assert e.attempts <= self.max_attempts
                if e.state == SENT:
                    assert e.worker is not None
                    assert key not in sent_by
                    sent_by[key] = e.worker
            assert len(self._entries) == len(self._order)
