"""Training loops: A2PSGD and the Hogwild!, DSGD, ASGD, FPSGD and serial baselines.

Every trainer returns ``(model, logs)`` where ``logs[0]`` evaluates the
initial model and ``logs[k]`` follows epoch ``k``. Workers are Python threads;
the numeric work runs inside GIL-releasing kernels so they overlap on
multi-core machines.
"""

from __future__ import annotations

import itertools
import logging
import math
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import _kernels
from .core import FactorModel, TrainConfig, TrainingDivergedError, UsageError, total_loss
from .evaluation import rmse_mae
from .ingest import Dataset
from .optimize import uses_nag
from .partition import BlockGrid, equal_ids, partition
from .scheduler import BlockLockTable, SchedTrace, acquire_with_retry

log = logging.getLogger(__name__)

EPOCH_FIELDS = ("epoch", "wall_time_s", "rmse", "mae", "train_loss", "block_updates")


@dataclass
class EpochLog:
    epoch: int
    wall_time_s: float
    rmse: float
    mae: float
    train_loss: float
    block_updates: int
    instance_updates: int = 0

    def row(self) -> list:
        return [getattr(self, f) for f in EPOCH_FIELDS]


class WriteAudit:
    """Counts concurrent writers per factor row; any count above one is a violation."""

    def __init__(self, n_rows: int, n_cols: int):
        self._lock = threading.Lock()
        self.row_writers = np.zeros(n_rows, dtype=np.int64)
        self.col_writers = np.zeros(n_cols, dtype=np.int64)
        self.violations = 0
        self.max_writers = 0

    def enter(self, rows: np.ndarray, cols: np.ndarray) -> None:
        with self._lock:
            self.row_writers[rows] += 1
            self.col_writers[cols] += 1
            peak = max(int(self.row_writers[rows].max(initial=0)), int(self.col_writers[cols].max(initial=0)))
            self.max_writers = max(self.max_writers, peak)
            if peak > 1:
                self.violations += 1

    def exit(self, rows: np.ndarray, cols: np.ndarray) -> None:
        with self._lock:
            self.row_writers[rows] -= 1
            self.col_writers[cols] -= 1


@dataclass
class Instrumentation:
    """Optional hooks for tests and the CLI's tracing flags."""

    audit: WriteAudit | None = None
    trace: SchedTrace | None = None
    max_fails: int = 0
    lease_log: list = field(default_factory=list)   # (epoch, worker, i, j) when record_leases
    record_leases: bool = False
    instance_updates: list = field(default_factory=list)
    table: BlockLockTable | None = None
    grid: BlockGrid | None = None


def _diverged(data: Dataset, idx: np.ndarray, p: int, where: str) -> TrainingDivergedError:
    k = int(idx[p])
    tr = data.train
    return TrainingDivergedError(tr.rows[k], tr.cols[k], tr.vals[k], where)


def _worker_rng(seed: int, worker: int) -> np.random.Generator:
    return np.random.default_rng([seed ^ worker, 0x5EED])


def _run_parallel(pool: ThreadPoolExecutor | None, fns: list[Callable[[], int]]) -> list[int]:
    """Run ``fns`` concurrently and wait for all of them (a barrier)."""
    if pool is None or len(fns) == 1:
        return [fn() for fn in fns]
    futures = [pool.submit(fn) for fn in fns]
    results, error = [], None
    for fut in futures:
        try:
            results.append(fut.result())
        except BaseException as exc:  # collect, then re-raise the first after all finish
            error = error or exc
    if error is not None:
        raise error
    return results


def _evaluate(model: FactorModel, data: Dataset, cfg: TrainConfig) -> tuple[float, float, float]:
    if len(data.test):
        r, a = rmse_mae(model, data.test, cfg.clamp)
    else:
        r = a = float("nan")
    return r, a, total_loss(model, data.train, cfg.lam)


def _train_loop(data: Dataset, cfg: TrainConfig, epoch_fn, model: FactorModel | None,
                pool_size: int) -> tuple[FactorModel, list[EpochLog]]:
    if model is None:
        model = FactorModel.initialize(data.n_rows, data.n_cols, cfg.d, cfg.seed)
    _kernels.warm_up(_kernels.kernels)
    r, a, loss = _evaluate(model, data, cfg)
    logs = [EpochLog(0, 0.0, r, a, loss, 0, 0)]
    best, stale, wall = r, 0, 0.0
    pool = ThreadPoolExecutor(max_workers=pool_size) if pool_size > 1 else None
    try:
        for epoch in range(1, cfg.max_epochs + 1):
            t0 = time.perf_counter()
            blocks, instances = epoch_fn(model, epoch, pool)
            wall += max(time.perf_counter() - t0, 1e-9)
            r, a, loss = _evaluate(model, data, cfg)
            logs.append(EpochLog(epoch, wall, r, a, loss, blocks, instances))
            log.info("%s epoch %d: rmse=%.6f mae=%.6f loss=%.6g t=%.3fs",
                     cfg.algorithm, epoch, r, a, loss, wall)
            if cfg.patience:
                if r < best - cfg.min_delta:
                    best, stale = r, 0
                else:
                    stale += 1
                    if stale >= cfg.patience:
                        log.info("early stop after %d epochs without improvement", stale)
                        break
    finally:
        if pool is not None:
            pool.shutdown(wait=True)
    return model, logs


# -- scheduler-based trainers ----------------------------------------------

def _train_scheduled(data: Dataset, cfg: TrainConfig, default_scheme: str, global_lock: bool,
                     model: FactorModel | None, inst: Instrumentation | None):
    c = cfg.threads
    train = data.train
    grid = partition(train, c, cfg.partition or default_scheme)
    table = BlockLockTable(grid.side, inst.trace if inst else None)
    if inst is not None:
        inst.table, inst.grid = table, grid
    rngs = [_worker_rng(cfg.seed, w) for w in range(c)]
    nag = uses_nag(cfg)
    stop = threading.Event()
    quota = grid.side * grid.side

    def epoch_fn(model: FactorModel, epoch: int, pool):
        tickets = itertools.count()
        K = _kernels.kernels

        def worker(w: int) -> tuple[int, int]:
            rng = rngs[w]
            stats = {"max_fails": 0}
            leases = instances = 0
            while not stop.is_set() and next(tickets) < quota:
                lease = acquire_with_retry(table, rng, w, global_lock, stats)
                i, j = lease.row_block, lease.col_block
                try:
                    idx = grid.entries(i, j)
                    if idx.size:
                        order = idx[rng.permutation(idx.size)]
                        if inst is not None and inst.audit is not None:
                            touched = (np.unique(train.rows[order]), np.unique(train.cols[order]))
                            inst.audit.enter(*touched)
                        if nag:
                            p = K.nag_run(model.m, model.n, model.phi, model.psi, train.rows, train.cols,
                                          train.vals, order, cfg.eta, cfg.lam, cfg.gamma)
                        else:
                            p = K.sgd_run(model.m, model.n, train.rows, train.cols, train.vals,
                                          order, cfg.eta, cfg.lam)
                        if inst is not None and inst.audit is not None:
                            inst.audit.exit(*touched)
                        if p >= 0:
                            stop.set()
                            raise _diverged(data, order, p, f"{cfg.algorithm} epoch {epoch} block ({i}, {j})")
                        instances += idx.size
                    if inst is not None and inst.record_leases:
                        inst.lease_log.append((epoch, w, i, j))
                finally:
                    table.release(lease, w)
                leases += 1
            if inst is not None:
                inst.max_fails = max(inst.max_fails, stats["max_fails"])
            return leases, instances

        results = _run_parallel(pool, [lambda w=w: worker(w) for w in range(c)])
        leases = sum(r[0] for r in results)
        instances = sum(r[1] for r in results)
        assert leases == quota, f"epoch completed {leases} leases, expected {quota}"
        if inst is not None:
            inst.instance_updates.append(instances)
        return leases, instances

    return _train_loop(data, cfg, epoch_fn, model, c)


def train_a2psgd(data: Dataset, cfg: TrainConfig, model: FactorModel | None = None,
                 inst: Instrumentation | None = None):
    """Balanced blocking, lock-free random scheduling and NAG updates."""
    return _train_scheduled(data, cfg, "balanced", False, model, inst)


def train_fpsgd(data: Dataset, cfg: TrainConfig, model: FactorModel | None = None,
                inst: Instrumentation | None = None):
    """Equal blocking, global-lock min-update scheduling and plain SGD."""
    return _train_scheduled(data, cfg, "equal", True, model, inst)


# -- Hogwild! ----------------------------------------------------------------

def train_hogwild(data: Dataset, cfg: TrainConfig, model: FactorModel | None = None,
                  inst: Instrumentation | None = None):
    """Unsynchronized random-instance SGD on shared factors; races are permitted."""
    c = cfg.threads
    train = data.train
    nnz = train.nnz
    rngs = [_worker_rng(cfg.seed, w) for w in range(c)]
    shares = [nnz // c + (1 if w < nnz % c else 0) for w in range(c)]
    nag = uses_nag(cfg)

    def epoch_fn(model: FactorModel, epoch: int, pool):
        K = _kernels.kernels

        def worker(w: int) -> int:
            idx = rngs[w].integers(0, nnz, size=shares[w]) if nnz else np.empty(0, np.int64)
            if nag:
                p = K.nag_run(model.m, model.n, model.phi, model.psi, train.rows, train.cols,
                              train.vals, idx, cfg.eta, cfg.lam, cfg.gamma)
            else:
                p = K.sgd_run(model.m, model.n, train.rows, train.cols, train.vals, idx, cfg.eta, cfg.lam)
            if p >= 0:
                raise _diverged(data, idx, p, f"hogwild epoch {epoch} worker {w}")
            return idx.size

        instances = sum(_run_parallel(pool, [lambda w=w: worker(w) for w in range(c)]))
        assert instances == nnz
        if inst is not None:
            inst.instance_updates.append(instances)
        return 0, instances

    return _train_loop(data, cfg, epoch_fn, model, c)


# -- DSGD ----------------------------------------------------------------------

def train_dsgd(data: Dataset, cfg: TrainConfig, model: FactorModel | None = None,
               inst: Instrumentation | None = None):
    """Stratified SGD on a ``c x c`` grid: stratum ``s`` gives worker ``k`` block
    ``(k, (k + s) mod c)``; strata are separated by barriers."""
    c = cfg.threads
    train = data.train
    grid = partition(train, c, cfg.partition or "equal", side=c)
    if inst is not None:
        inst.grid = grid
    rngs = [_worker_rng(cfg.seed, w) for w in range(c)]
    nag = uses_nag(cfg)

    def epoch_fn(model: FactorModel, epoch: int, pool):
        K = _kernels.kernels
        instances = blocks = 0
        for s in range(c):
            def worker(w: int, s: int = s) -> int:
                i, j = w, (w + s) % c
                idx = grid.entries(i, j)
                if not idx.size:
                    return 0
                order = idx[rngs[w].permutation(idx.size)]
                if inst is not None and inst.audit is not None:
                    touched = (np.unique(train.rows[order]), np.unique(train.cols[order]))
                    inst.audit.enter(*touched)
                if nag:
                    p = K.nag_run(model.m, model.n, model.phi, model.psi, train.rows, train.cols,
                                  train.vals, order, cfg.eta, cfg.lam, cfg.gamma)
                else:
                    p = K.sgd_run(model.m, model.n, train.rows, train.cols, train.vals, order,
                                  cfg.eta, cfg.lam)
                if inst is not None and inst.audit is not None:
                    inst.audit.exit(*touched)
                if p >= 0:
                    raise _diverged(data, order, p, f"dsgd epoch {epoch} stratum {s}")
                if inst is not None and inst.record_leases:
                    inst.lease_log.append((epoch, w, i, j))
                return idx.size

            instances += sum(_run_parallel(pool, [lambda w=w: worker(w) for w in range(c)]))
            blocks += c
        assert instances == train.nnz
        if inst is not None:
            inst.instance_updates.append(instances)
        return blocks, instances

    return _train_loop(data, cfg, epoch_fn, model, c)


# -- ASGD ----------------------------------------------------------------------

def train_asgd(data: Dataset, cfg: TrainConfig, model: FactorModel | None = None,
               inst: Instrumentation | None = None):
    """Alternating SGD: update ``m`` with ``n`` frozen, barrier, then the reverse.

    Row (column) nodes are split into ``c`` contiguous equal-count ranges, one
    per worker.
    """
    if cfg.optimizer == "nag":
        raise UsageError("asgd alternates plain SGD half-steps; the nag optimizer is not supported")
    c = cfg.threads
    train = data.train
    if train.n_rows < c or train.n_cols < c:
        raise UsageError("matrix too small for the requested thread count")
    row_cut = np.searchsorted(equal_ids(train.n_rows, c), np.arange(c + 1))
    col_cut = np.searchsorted(equal_ids(train.n_cols, c), np.arange(c + 1))
    row_sets = [np.arange(train.row_ptr[row_cut[w]], train.row_ptr[row_cut[w + 1]]) for w in range(c)]
    col_sets = [train.col_order[train.col_ptr[col_cut[w]]:train.col_ptr[col_cut[w + 1]]] for w in range(c)]
    rngs = [_worker_rng(cfg.seed, w) for w in range(c)]

    def epoch_fn(model: FactorModel, epoch: int, pool):
        K = _kernels.kernels

        def phase(sets, kernel, name):
            def worker(w: int) -> int:
                idx = sets[w]
                if not idx.size:
                    return 0
                order = idx[rngs[w].permutation(idx.size)]
                p = kernel(model.m, model.n, train.rows, train.cols, train.vals, order, cfg.eta, cfg.lam)
                if p >= 0:
                    raise _diverged(data, order, p, f"asgd epoch {epoch} phase {name}")
                return idx.size
            return sum(_run_parallel(pool, [lambda w=w: worker(w) for w in range(c)]))

        n_m = phase(row_sets, K.sgd_rows_run, "M")
        n_n = phase(col_sets, K.sgd_cols_run, "N")
        assert n_m == n_n == train.nnz
        if inst is not None:
            inst.instance_updates.append(n_m)
        return 0, n_m

    return _train_loop(data, cfg, epoch_fn, model, c)


# -- serial reference ----------------------------------------------------------

def train_serial(data: Dataset, cfg: TrainConfig, model: FactorModel | None = None,
                 inst: Instrumentation | None = None):
    """One worker sweeping a fresh seeded permutation of all instances per epoch."""
    train = data.train
    rng = _worker_rng(cfg.seed, 0)
    nag = uses_nag(cfg)

    def epoch_fn(model: FactorModel, epoch: int, pool):
        K = _kernels.kernels
        order = rng.permutation(train.nnz)
        if nag:
            p = K.nag_run(model.m, model.n, model.phi, model.psi, train.rows, train.cols, train.vals,
                          order, cfg.eta, cfg.lam, cfg.gamma)
        else:
            p = K.sgd_run(model.m, model.n, train.rows, train.cols, train.vals, order, cfg.eta, cfg.lam)
        if p >= 0:
            raise _diverged(data, order, p, f"{cfg.algorithm} epoch {epoch}")
        if inst is not None:
            inst.instance_updates.append(train.nnz)
        return 0, train.nnz

    return _train_loop(data, cfg, epoch_fn, model, 1)


TRAINERS = {
    "a2psgd": train_a2psgd,
    "fpsgd": train_fpsgd,
    "hogwild": train_hogwild,
    "dsgd": train_dsgd,
    "asgd": train_asgd,
    "serial-sgd": train_serial,
    "serial-nag": train_serial,
}


def train(data: Dataset, cfg: TrainConfig, model: FactorModel | None = None,
          inst: Instrumentation | None = None) -> tuple[FactorModel, list[EpochLog]]:
    return TRAINERS[cfg.algorithm](data, cfg, model, inst)


def time_to_best(logs: list[EpochLog]) -> float:
    """Training wall time at the epoch with the lowest test RMSE."""
    valid = [lg for lg in logs if not math.isnan(lg.rmse)]
    best = min(valid, key=lambda lg: (lg.rmse, lg.epoch))
    return best.wall_time_s


def time_to_rmse(logs: list[EpochLog], target: float) -> float:
    """Wall time of the first epoch whose test RMSE is at or below ``target`` (inf if never)."""
    for lg in logs:
        if lg.rmse <= target:
            return lg.wall_time_s
    return math.inf
