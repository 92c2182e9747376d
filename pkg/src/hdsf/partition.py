"""Split a sparse matrix into a square grid of sub-blocks.

Two schemes are provided: equal node counts per block (``partition_equal``) and
the greedy instance-balanced cut (``partition_balanced``), which walks nodes in
index order and closes a block once its running instance count reaches
``ceil(nnz / side)``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .core import HdsMatrix, UsageError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class BlockGrid:
    side: int
    row_block: np.ndarray   # block id of every row node
    col_block: np.ndarray
    row_bounds: np.ndarray  # side+1 node offsets; row block i covers [row_bounds[i], row_bounds[i+1])
    col_bounds: np.ndarray
    block_ptr: np.ndarray   # side*side+1 offsets into block_order
    block_order: np.ndarray  # entry positions grouped by block, row-major within a block
    block_counts: np.ndarray  # side x side instance counts
    row_overflow: int = 0
    col_overflow: int = 0

    def entries(self, i: int, j: int) -> np.ndarray:
        b = i * self.side + j
        return self.block_order[self.block_ptr[b]:self.block_ptr[b + 1]]

    @property
    def row_block_counts(self) -> np.ndarray:
        return self.block_counts.sum(axis=1)

    @property
    def col_block_counts(self) -> np.ndarray:
        return self.block_counts.sum(axis=0)

    @property
    def nnz(self) -> int:
        return int(self.block_counts.sum())


def _bounds_from_ids(ids: np.ndarray, side: int) -> np.ndarray:
    counts = np.bincount(ids, minlength=side)
    bounds = np.zeros(side + 1, dtype=np.int64)
    np.cumsum(counts, out=bounds[1:])
    return bounds


def _assemble(matrix: HdsMatrix, side: int, row_block: np.ndarray, col_block: np.ndarray,
              row_overflow: int = 0, col_overflow: int = 0) -> BlockGrid:
    key = row_block[matrix.rows] * side + col_block[matrix.cols]
    order = np.argsort(key, kind="stable").astype(np.int64)
    flat = np.bincount(key, minlength=side * side).astype(np.int64)
    ptr = np.zeros(side * side + 1, dtype=np.int64)
    np.cumsum(flat, out=ptr[1:])
    return BlockGrid(
        side=side,
        row_block=row_block,
        col_block=col_block,
        row_bounds=_bounds_from_ids(row_block, side),
        col_bounds=_bounds_from_ids(col_block, side),
        block_ptr=ptr,
        block_order=order,
        block_counts=flat.reshape(side, side),
        row_overflow=row_overflow,
        col_overflow=col_overflow,
    )


def _check_size(matrix: HdsMatrix, side: int) -> None:
    if side < 1:
        raise UsageError("grid side must be >= 1")
    if matrix.n_rows < side or matrix.n_cols < side:
        raise UsageError(f"{matrix.n_rows}x{matrix.n_cols} matrix is too small for a {side}x{side} grid")


def equal_ids(n_nodes: int, side: int) -> np.ndarray:
    """Contiguous blocks whose sizes differ by at most one, larger blocks first."""
    base, extra = divmod(n_nodes, side)
    sizes = np.full(side, base, dtype=np.int64)
    sizes[:extra] += 1
    return np.repeat(np.arange(side, dtype=np.int64), sizes)


def greedy_ids(degrees: np.ndarray, side: int) -> tuple[np.ndarray, int]:
    """Greedy prefix cut of nodes into ``side`` blocks by instance count.

    Returns per-node block ids and how many nodes had their id clamped into the
    last block because the walk produced more than ``side`` blocks.
    """
    total = int(degrees.sum())
    threshold = -(-total // side)
    ids = np.empty(degrees.shape[0], dtype=np.int64)
    block = 0
    running = 0
    overflow = 0
    last = degrees.shape[0] - 1
    for node, deg in enumerate(degrees.tolist()):
        if block > side - 1:
            overflow += 1
        ids[node] = min(block, side - 1)
        running += deg
        if running >= threshold or node == last:
            running = 0
            block += 1
    return ids, overflow


def partition_equal(matrix: HdsMatrix, c: int, side: int | None = None) -> BlockGrid:
    """Equal-node-count blocking into a ``(c+1) x (c+1)`` grid.

    ``side`` overrides the grid side (DSGD uses ``c x c``).
    """
    side = c + 1 if side is None else side
    if c < 1:
        raise UsageError("thread count must be >= 1")
    _check_size(matrix, side)
    return _assemble(matrix, side, equal_ids(matrix.n_rows, side), equal_ids(matrix.n_cols, side))


def partition_balanced(matrix: HdsMatrix, c: int, side: int | None = None) -> BlockGrid:
    side = c + 1 if side is None else side
    if c < 1:
        raise UsageError("thread count must be >= 1")
    _check_size(matrix, side)
    row_ids, row_over = greedy_ids(matrix.row_degree, side)
    col_ids, col_over = greedy_ids(matrix.col_degree, side)
    if row_over or col_over:
        log.warning("balanced blocking overflowed the %dx%d grid: %d row nodes and %d column "
                    "nodes merged into the last block", side, side, row_over, col_over)
    return _assemble(matrix, side, row_ids, col_ids, row_over, col_over)


def partition(matrix: HdsMatrix, c: int, scheme: str, side: int | None = None) -> BlockGrid:
    if scheme == "equal":
        return partition_equal(matrix, c, side)
    if scheme == "balanced":
        return partition_balanced(matrix, c, side)
    raise UsageError(f"unknown partition scheme {scheme!r}")


def _stats(x: np.ndarray) -> dict:
    x = np.asarray(x, dtype=np.float64)
    mean = float(x.mean())
    return {
        "max": float(x.max()),
        "mean": mean,
        "min": float(x.min()),
        "imbalance": float(x.max() / mean) if mean > 0 else 1.0,
    }


def balance_report(grid: BlockGrid) -> dict:
    """Max/mean/min instance counts per block, row block and column block.

    ``imbalance`` is max/mean; 1.0 means perfectly even. The result is plain
    JSON-serializable data.
    """
    return {
        "side": grid.side,
        "nnz": grid.nnz,
        "block": _stats(grid.block_counts.ravel()),
        "row_block": _stats(grid.row_block_counts),
        "col_block": _stats(grid.col_block_counts),
        "row_overflow": grid.row_overflow,
        "col_overflow": grid.col_overflow,
    }
