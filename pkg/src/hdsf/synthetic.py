"""Synthetic rating matrices with known generating factors."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import HdsMatrix


@dataclass
class Planted:
    rows: np.ndarray
    cols: np.ndarray
    vals: np.ndarray
    m_true: np.ndarray
    n_true: np.ndarray
    noise: float
    shape: tuple[int, int]

    def triples(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.rows, self.cols, self.vals

    def matrix(self) -> HdsMatrix:
        return HdsMatrix(self.shape[0], self.shape[1], self.rows, self.cols, self.vals)


def _planted_values(rng, rows, cols, n_rows, n_cols, rank, noise):
    # Entries N(0, rank**-0.5) give ratings with unit variance before noise.
    scale = rank ** -0.25
    m_true = rng.normal(0.0, scale, size=(n_rows, rank))
    n_true = rng.normal(0.0, scale, size=(n_cols, rank))
    vals = np.einsum("ij,ij->i", m_true[rows], n_true[cols])
    if noise > 0:
        vals = vals + rng.normal(0.0, noise, size=vals.shape[0])
    return vals, m_true, n_true


def planted_low_rank(n_rows: int = 500, n_cols: int = 500, density: float = 0.05, rank: int = 4,
                     noise: float = 0.01, seed: int = 0, holdout: float = 0.3) -> Planted:
    """Uniformly sampled cells of a rank-``rank`` matrix plus Gaussian noise.

    ``density`` is the density of the training part: enough extra cells are
    drawn that removing a ``holdout`` fraction for testing leaves
    ``density * n_rows * n_cols`` known instances.
    """
    rng = np.random.default_rng(seed)
    nnz = int(round(density * n_rows * n_cols / (1.0 - holdout)))
    cells = rng.choice(n_rows * n_cols, size=nnz, replace=False)
    rows, cols = np.divmod(cells, n_cols)
    vals, m_true, n_true = _planted_values(rng, rows, cols, n_rows, n_cols, rank, noise)
    return Planted(rows.astype(np.int64), cols.astype(np.int64), vals, m_true, n_true, noise,
                   (n_rows, n_cols))


def _zipf_weights(n: int, exponent: float, rng) -> np.ndarray:
    w = np.arange(1, n + 1, dtype=np.float64) ** -exponent
    # Scatter the ranks over node ids so popularity is not tied to index order.
    return rng.permutation(w / w.sum())


def power_law(n_rows: int = 10_000, n_cols: int = 10_000, nnz: int = 1_000_000,
              exponent: float = 1.2, rank: int = 8, noise: float = 0.1, seed: int = 0) -> Planted:
    """Zipf-distributed row and column popularity with planted low-rank ratings.

    Cells are drawn independently from the product of the two Zipf marginals
    and de-duplicated, oversampling until ``nnz`` distinct cells exist.
    """
    if nnz > n_rows * n_cols:
        raise ValueError("nnz exceeds the number of cells")
    rng = np.random.default_rng(seed)
    pr = _zipf_weights(n_rows, exponent, rng)
    pc = _zipf_weights(n_cols, exponent, rng)
    keys = np.empty(0, dtype=np.int64)
    draw = nnz
    while keys.shape[0] < nnz:
        r = rng.choice(n_rows, size=draw, p=pr)
        c = rng.choice(n_cols, size=draw, p=pc)
        keys = np.unique(np.concatenate([keys, r.astype(np.int64) * n_cols + c]))
        draw = max(int(math.ceil(1.5 * (nnz - keys.shape[0]))), 1024)
    keys = rng.permutation(keys)[:nnz]
    rows, cols = np.divmod(keys, n_cols)
    vals, m_true, n_true = _planted_values(rng, rows, cols, n_rows, n_cols, rank, noise)
    return Planted(rows, cols, vals, m_true, n_true, noise, (n_rows, n_cols))
