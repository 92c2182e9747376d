"""Free-block scheduling over a square grid of row and column blocks.

A worker holds at most one *lease* on a cell ``(i, j)``. While held, no other
worker can hold any cell in row block ``i`` or column block ``j``. Two ways to
obtain a lease share the same lock table:

``try_acquire``
    Pick a uniformly random cell and try the row flag then the column flag,
    rolling back on failure. No worker ever waits on another.
``try_acquire_global_lock``
    Enter one scheduler-wide critical section, then pick among the currently
    free cells one with the fewest completed updates (ties at random).
"""

from __future__ import annotations

import csv
import threading
import time
from dataclasses import dataclass, field

import numpy as np

SPIN_BEFORE_YIELD = 64


@dataclass
class BlockLease:
    row_block: int
    col_block: int
    acquired_at: int = field(default_factory=time.monotonic_ns)
    released: bool = False


class SchedTrace:
    """In-memory scheduler event log written as CSV on :meth:`dump`."""

    HEADER = ("timestamp_ns", "worker", "i", "j", "event")

    def __init__(self):
        self._events: list[tuple] = []
        self._lock = threading.Lock()

    def record(self, worker: int, i: int, j: int, event: str) -> None:
        row = (time.monotonic_ns(), worker, i, j, event)
        with self._lock:
            self._events.append(row)

    @property
    def events(self) -> list[tuple]:
        return list(self._events)

    def dump(self, path) -> None:
        with open(path, "a", newline="") as fh:
            w = csv.writer(fh)
            if fh.tell() == 0:
                w.writerow(self.HEADER)
            with self._lock:
                w.writerows(self._events)
                self._events.clear()


class BlockLockTable:
    """Row/column try-acquire flags plus per-cell completed-update counters.

    ``update_counts[i, j]`` is incremented by the lease holder *before* its
    flags are dropped, so each cell is only ever written by the one worker that
    owns both its row and its column block.
    """

    def __init__(self, side: int, trace: SchedTrace | None = None):
        if side < 1:
            raise ValueError("side must be >= 1")
        self.side = side
        self.row_locks = [threading.Lock() for _ in range(side)]
        self.col_locks = [threading.Lock() for _ in range(side)]
        self.update_counts = np.zeros((side, side), dtype=np.int64)
        self.trace = trace
        self._global = threading.Lock()

    # -- lock-free path ----------------------------------------------------

    def try_acquire(self, rng: np.random.Generator, worker: int = 0) -> BlockLease | None:
        i = int(rng.integers(self.side))
        j = int(rng.integers(self.side))
        return self._try_cell(i, j, worker)

    def _try_cell(self, i: int, j: int, worker: int = 0) -> BlockLease | None:
        if not self.row_locks[i].acquire(blocking=False):
            self._trace(worker, i, j, "fail")
            return None
        if not self.col_locks[j].acquire(blocking=False):
            self.row_locks[i].release()
            self._trace(worker, i, j, "fail")
            return None
        self._trace(worker, i, j, "acquire")
        return BlockLease(i, j)

    def release(self, lease: BlockLease, worker: int = 0) -> None:
        assert not lease.released, f"lease ({lease.row_block}, {lease.col_block}) released twice"
        lease.released = True
        i, j = lease.row_block, lease.col_block
        self.update_counts[i, j] += 1
        self._trace(worker, i, j, "release")
        self.col_locks[j].release()
        self.row_locks[i].release()

    # -- global-lock path --------------------------------------------------

    def try_acquire_global_lock(self, rng: np.random.Generator, worker: int = 0) -> BlockLease | None:
        with self._global:
            row_free = [not lk.locked() for lk in self.row_locks]
            col_free = [not lk.locked() for lk in self.col_locks]
            rows = [i for i, f in enumerate(row_free) if f]
            cols = [j for j, f in enumerate(col_free) if f]
            if not rows or not cols:
                self._trace(worker, -1, -1, "fail")
                return None
            counts = self.update_counts[np.ix_(rows, cols)]
            best = np.flatnonzero(counts.ravel() == counts.min())
            pick = int(best[rng.integers(best.size)]) if best.size > 1 else int(best[0])
            i, j = rows[pick // len(cols)], cols[pick % len(cols)]
            # Another worker releases outside this section, never acquires, so
            # a flag seen free here cannot be taken before we take it.
            lease = self._try_cell(i, j, worker)
            assert lease is not None
            return lease

    def free_cells(self) -> list[tuple[int, int]]:
        return [(i, j) for i in range(self.side) for j in range(self.side)
                if not self.row_locks[i].locked() and not self.col_locks[j].locked()]

    def all_clear(self) -> bool:
        return not any(lk.locked() for lk in self.row_locks + self.col_locks)

    def _trace(self, worker: int, i: int, j: int, event: str) -> None:
        if self.trace is not None:
            self.trace.record(worker, i, j, event)


def acquire_with_retry(table: BlockLockTable, rng: np.random.Generator, worker: int = 0,
                       global_lock: bool = False, stats: dict | None = None) -> BlockLease:
    """Retry until a lease is obtained.

    A fresh random cell is drawn on every attempt; after every
    ``SPIN_BEFORE_YIELD`` consecutive failures the thread yields briefly.
    ``stats['max_fails']`` tracks the longest failure streak seen.
    """
    attempt = table.try_acquire_global_lock if global_lock else table.try_acquire
    fails = 0
    while True:
        lease = attempt(rng, worker)
        if lease is not None:
            if stats is not None and fails > stats.get("max_fails", 0):
                stats["max_fails"] = fails
            return lease
        fails += 1
        if fails % SPIN_BEFORE_YIELD == 0:
            time.sleep(0)
