"""Shared harness: hammer a lock table from many threads with shadow counters."""

import threading
import time

import numpy as np

from hdsf.scheduler import BlockLockTable, acquire_with_retry


class Shadow:
    """Per-row/column holder counters, each guarded by its own small lock."""

    def __init__(self, side):
        self.rows = [0] * side
        self.cols = [0] * side
        self.row_guard = [threading.Lock() for _ in range(side)]
        self.col_guard = [threading.Lock() for _ in range(side)]
        self.violations = 0
        self.peak = 0

    def enter(self, i, j):
        for counts, guards, k in ((self.rows, self.row_guard, i), (self.cols, self.col_guard, j)):
            with guards[k]:
                counts[k] += 1
                self.peak = max(self.peak, counts[k])
                if counts[k] > 1:
                    self.violations += 1

    def exit(self, i, j):
        for counts, guards, k in ((self.rows, self.row_guard, i), (self.cols, self.col_guard, j)):
            with guards[k]:
                counts[k] -= 1


def run_stress(workers=8, side=9, seconds=None, cycles_per_worker=None, global_lock=False, seed=0,
               min_cycles=0):
    """Acquire/release until the time or cycle budget runs out.

    With ``seconds`` set, workers keep going past the deadline until the
    total reaches ``min_cycles``, so both the duration and the count hold.

    Returns a dict with total cycles, Σ update_counts, shadow violations,
    monitor conflicts and the longest failure streak.
    """
    table = BlockLockTable(side)
    shadow = Shadow(side)
    held = [None] * workers  # slot writes are atomic, the monitor reads a copy
    done = threading.Event()
    cycles = [0] * workers
    streaks = [0] * workers
    monitor_conflicts = [0]
    deadline = time.monotonic() + seconds if seconds else None

    def worker(w):
        rng = np.random.default_rng([seed, w])
        stats = {"max_fails": 0}
        n = 0
        while True:
            if cycles_per_worker is not None and n >= cycles_per_worker:
                break
            if deadline is not None and (n & 255) == 0:
                cycles[w] = n
                if time.monotonic() >= deadline and sum(cycles) >= min_cycles:
                    break
            lease = acquire_with_retry(table, rng, w, global_lock, stats)
            shadow.enter(lease.row_block, lease.col_block)
            held[w] = (lease.row_block, lease.col_block)
            shadow.exit(lease.row_block, lease.col_block)
            held[w] = None
            table.release(lease, w)
            n += 1
        cycles[w] = n
        streaks[w] = stats["max_fails"]

    def monitor():
        while not done.is_set():
            cells = [c for c in list(held) if c is not None]
            rows = [c[0] for c in cells]
            cols = [c[1] for c in cells]
            if len(set(rows)) != len(rows) or len(set(cols)) != len(cols):
                monitor_conflicts[0] += 1
            time.sleep(0.0005)

    threads = [threading.Thread(target=worker, args=(w,)) for w in range(workers)]
    mon = threading.Thread(target=monitor)
    mon.start()
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    done.set()
    mon.join()
    return {
        "cycles": sum(cycles),
        "update_total": int(table.update_counts.sum()),
        "violations": shadow.violations,
        "peak": shadow.peak,
        "monitor_conflicts": monitor_conflicts[0],
        "max_fails": max(streaks),
        "all_clear": table.all_clear(),
    }
