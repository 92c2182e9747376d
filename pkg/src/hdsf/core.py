"""Domain types shared by every trainer: the sparse rating matrix, the factor
model, hyperparameters, and the prediction/loss primitives."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

log = logging.getLogger(__name__)

ALGORITHMS = ("a2psgd", "hogwild", "dsgd", "asgd", "fpsgd", "serial-sgd", "serial-nag")


class HdsError(Exception):
    """Base class for errors raised by this package."""


class UsageError(HdsError, ValueError):
    """Bad arguments: out-of-range indices, mismatched shapes, invalid config."""


class TrainingDivergedError(HdsError, FloatingPointError):
    """A parameter update produced a non-finite value."""

    def __init__(self, u: int, v: int, r: float, detail: str = ""):
        self.u, self.v, self.r = int(u), int(v), float(r)
        msg = f"training diverged at instance (u={self.u}, v={self.v}, r={self.r})"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


class RatingTriple(NamedTuple):
    u: int
    v: int
    r: float


class RatingSet(NamedTuple):
    """Structure-of-arrays view of a list of rating triples."""

    rows: np.ndarray
    cols: np.ndarray
    vals: np.ndarray

    def __len__(self) -> int:  # type: ignore[override]
        return int(self.vals.shape[0])

    @classmethod
    def from_triples(cls, triples: Sequence[RatingTriple]) -> "RatingSet":
        if len(triples) == 0:
            return cls(np.empty(0, np.int64), np.empty(0, np.int64), np.empty(0, np.float64))
        arr = np.asarray(triples, dtype=np.float64)
        return cls(arr[:, 0].astype(np.int64), arr[:, 1].astype(np.int64), arr[:, 2].copy())

    def triples(self) -> list[RatingTriple]:
        return [RatingTriple(int(u), int(v), float(r))
                for u, v, r in zip(self.rows, self.cols, self.vals)]


def as_rating_set(data) -> RatingSet:
    if isinstance(data, RatingSet):
        return data
    if isinstance(data, HdsMatrix):
        return RatingSet(data.rows, data.cols, data.vals)
    return RatingSet.from_triples(list(data))


class HdsMatrix:
    """Immutable sparse matrix holding the known instance set.

    Entries are stored row-major (sorted by row, then column) so each row owns a
    contiguous span ``row_ptr[u]:row_ptr[u+1]``. The column view is a permutation
    ``col_order`` of entry positions grouped by column, delimited by ``col_ptr``.
    """

    def __init__(self, n_rows: int, n_cols: int, rows, cols, vals):
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.asarray(vals, dtype=np.float64)
        if not (rows.shape == cols.shape == vals.shape) or rows.ndim != 1:
            raise UsageError("rows, cols and vals must be 1-d arrays of equal length")
        if n_rows < 0 or n_cols < 0:
            raise UsageError("matrix dimensions must be non-negative")
        if rows.size:
            if rows.min() < 0 or rows.max() >= n_rows or cols.min() < 0 or cols.max() >= n_cols:
                raise UsageError("entry index out of range for matrix shape")
            if not np.all(np.isfinite(vals)):
                raise UsageError("ratings must be finite")

        order = np.lexsort((cols, rows))
        rows, cols, vals = rows[order], cols[order], vals[order]
        if rows.size > 1:
            dup = (rows[1:] == rows[:-1]) & (cols[1:] == cols[:-1])
            if dup.any():
                raise UsageError(f"{int(dup.sum())} duplicate (u, v) entries")

        self.n_rows = int(n_rows)
        self.n_cols = int(n_cols)
        self.rows, self.cols, self.vals = rows, cols, vals
        self.row_degree = np.bincount(rows, minlength=n_rows).astype(np.int64)
        self.col_degree = np.bincount(cols, minlength=n_cols).astype(np.int64)
        self.row_ptr = np.zeros(n_rows + 1, dtype=np.int64)
        np.cumsum(self.row_degree, out=self.row_ptr[1:])
        self.col_order = np.argsort(cols, kind="stable").astype(np.int64)
        self.col_ptr = np.zeros(n_cols + 1, dtype=np.int64)
        np.cumsum(self.col_degree, out=self.col_ptr[1:])
        for a in (self.rows, self.cols, self.vals, self.row_ptr, self.col_ptr, self.col_order):
            a.setflags(write=False)

    @property
    def shape(self) -> tuple[int, int]:
        return self.n_rows, self.n_cols

    @property
    def nnz(self) -> int:
        return int(self.vals.shape[0])

    def __len__(self) -> int:
        return self.nnz

    def __repr__(self) -> str:
        return f"HdsMatrix({self.n_rows}x{self.n_cols}, nnz={self.nnz})"

    def row_entries(self, u: int) -> np.ndarray:
        """Entry positions of row ``u`` (a contiguous range)."""
        return np.arange(self.row_ptr[u], self.row_ptr[u + 1])

    def col_entries(self, v: int) -> np.ndarray:
        return self.col_order[self.col_ptr[v]:self.col_ptr[v + 1]]

    def entry(self, k: int) -> RatingTriple:
        return RatingTriple(int(self.rows[k]), int(self.cols[k]), float(self.vals[k]))

    def triples(self) -> list[RatingTriple]:
        return as_rating_set(self).triples()

    @classmethod
    def from_triples(cls, triples: Sequence[RatingTriple], shape=None) -> "HdsMatrix":
        rs = as_rating_set(triples)
        if shape is None:
            shape = (int(rs.rows.max()) + 1 if len(rs) else 0,
                     int(rs.cols.max()) + 1 if len(rs) else 0)
        return cls(shape[0], shape[1], rs.rows, rs.cols, rs.vals)


@dataclass
class FactorModel:
    """Dense factors ``m`` (|U| x D) and ``n`` (|V| x D) with NAG momentum.

    ``phi`` and ``psi`` are the row- and column-side momentum matrices.
    """

    m: np.ndarray
    n: np.ndarray
    phi: np.ndarray = None  # type: ignore[assignment]
    psi: np.ndarray = None  # type: ignore[assignment]

    def __post_init__(self):
        self.m = np.ascontiguousarray(self.m, dtype=np.float64)
        self.n = np.ascontiguousarray(self.n, dtype=np.float64)
        if self.m.ndim != 2 or self.n.ndim != 2 or self.m.shape[1] != self.n.shape[1]:
            raise UsageError("m and n must be 2-d with the same number of columns")
        if self.phi is None:
            self.phi = np.zeros_like(self.m)
        if self.psi is None:
            self.psi = np.zeros_like(self.n)
        self.phi = np.ascontiguousarray(self.phi, dtype=np.float64)
        self.psi = np.ascontiguousarray(self.psi, dtype=np.float64)
        if self.phi.shape != self.m.shape or self.psi.shape != self.n.shape:
            raise UsageError("momentum matrices must match factor shapes")

    @property
    def d(self) -> int:
        return int(self.m.shape[1])

    @property
    def n_rows(self) -> int:
        return int(self.m.shape[0])

    @property
    def n_cols(self) -> int:
        return int(self.n.shape[0])

    @classmethod
    def initialize(cls, n_rows: int, n_cols: int, d: int, seed: int = 0) -> "FactorModel":
        """Draw every factor entry i.i.d. from U[0, 1/sqrt(d)); momentum starts at zero."""
        if d < 1:
            raise UsageError("latent dimension must be >= 1")
        if d > min(n_rows, n_cols):
            raise UsageError(f"latent dimension {d} exceeds min(|U|, |V|) = {min(n_rows, n_cols)}")
        if d > min(n_rows, n_cols) / 4:
            log.warning("latent dimension %d is not small relative to %dx%d", d, n_rows, n_cols)
        rng = np.random.default_rng(seed)
        scale = 1.0 / math.sqrt(d)
        m = rng.uniform(0.0, scale, size=(n_rows, d))
        n = rng.uniform(0.0, scale, size=(n_cols, d))
        return cls(m, n)

    def copy(self) -> "FactorModel":
        return FactorModel(self.m.copy(), self.n.copy(), self.phi.copy(), self.psi.copy())

    def reset_momentum(self) -> None:
        self.phi[:] = 0.0
        self.psi[:] = 0.0

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.m).all() and np.isfinite(self.n).all()
                    and np.isfinite(self.phi).all() and np.isfinite(self.psi).all())


@dataclass
class TrainConfig:
    lam: float = 5e-2
    eta: float = 1e-4
    gamma: float = 0.9
    d: int = 16
    threads: int = 1
    max_epochs: int = 100
    seed: int = 0
    algorithm: str = "a2psgd"
    clamp: tuple[float, float] | None = None
    patience: int = 10
    min_delta: float = 1e-5
    # Ablation overrides; None selects each algorithm's own choice.
    partition: str | None = None
    optimizer: str | None = None

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise UsageError(f"unknown algorithm {self.algorithm!r}; choose from {', '.join(ALGORITHMS)}")
        if self.lam < 0:
            raise UsageError("lambda must be >= 0")
        if not self.eta > 0:
            raise UsageError("eta must be > 0")
        if not 0.0 <= self.gamma < 1.0:
            raise UsageError("gamma must lie in [0, 1)")
        if self.d < 1:
            raise UsageError("rank must be >= 1")
        if self.threads < 1:
            raise UsageError("threads must be >= 1")
        if self.max_epochs < 0:
            raise UsageError("max_epochs must be >= 0")
        if self.partition not in (None, "equal", "balanced"):
            raise UsageError("partition must be 'equal' or 'balanced'")
        if self.optimizer not in (None, "sgd", "nag"):
            raise UsageError("optimizer must be 'sgd' or 'nag'")
        if self.clamp is not None:
            lo, hi = self.clamp
            if not lo < hi:
                raise UsageError("clamp range must satisfy lo < hi")
            self.clamp = (float(lo), float(hi))


def _check_index(model: FactorModel, u: int, v: int) -> None:
    if not (0 <= u < model.n_rows and 0 <= v < model.n_cols):
        raise UsageError(f"index (u={u}, v={v}) out of range for {model.n_rows}x{model.n_cols} model")


def predict(model: FactorModel, u: int, v: int) -> float:
    _check_index(model, u, v)
    return float(np.dot(model.m[u], model.n[v]))


def instance_loss(model: FactorModel, t: RatingTriple, lam: float) -> float:
    """Half squared error plus half L2 penalty of the two touched vectors."""
    u, v, r = t
    _check_index(model, u, v)
    mu, nv = model.m[u], model.n[v]
    e = r - float(np.dot(mu, nv))
    return 0.5 * (e * e + lam * (float(np.dot(mu, mu)) + float(np.dot(nv, nv))))


def total_loss(model: FactorModel, matrix, lam: float) -> float:
    """Sum of :func:`instance_loss` over every entry, in entry order."""
    data = as_rating_set(matrix)
    if isinstance(matrix, HdsMatrix) and matrix.shape != (model.n_rows, model.n_cols):
        raise UsageError(f"model is {model.n_rows}x{model.n_cols}, matrix is {matrix.shape[0]}x{matrix.shape[1]}")
    if len(data) == 0:
        return 0.0
    if data.rows.max() >= model.n_rows or data.cols.max() >= model.n_cols:
        raise UsageError("entry index out of range for model")
    mu = model.m[data.rows]
    nv = model.n[data.cols]
    err = data.vals - np.einsum("ij,ij->i", mu, nv)
    reg = np.einsum("ij,ij->i", mu, mu) + np.einsum("ij,ij->i", nv, nv)
    return float(np.sum(0.5 * (err * err + lam * reg)))
