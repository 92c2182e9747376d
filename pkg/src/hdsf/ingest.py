"""Rating file parsing, ID remapping, train/test splitting and the dataset cache."""

from __future__ import annotations

import json
import logging
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import HdsError, HdsMatrix, RatingSet, UsageError

log = logging.getLogger(__name__)

FORMATS = ("movielens-dat", "tsv", "csv")
MAX_MALFORMED_FRACTION = 0.01
MIN_TRIPLES = 10

CACHE_MAGIC = b"HDSD"
CACHE_VERSION = 1


class FormatError(HdsError):
    """Input file does not look like the declared rating format."""


class CacheError(HdsError):
    """Dataset cache file is truncated, corrupt or of an unknown version."""


def _as_id(tok: str):
    try:
        return int(tok)
    except ValueError:
        return tok


def _detect_delimiter(line: str) -> str | None:
    for delim in ("\t", ",", ";"):
        if delim in line:
            return delim
    return None  # any whitespace


def parse_ratings(path, fmt: str = "movielens-dat") -> list[tuple]:
    """Read ``(raw_user, raw_item, rating)`` triples in file order.

    Extra trailing fields (timestamps) are ignored. Blank lines and lines
    starting with ``#`` or ``%`` are skipped silently; a non-numeric first
    line is taken as a header. Any other unparsable line is counted as
    malformed and skipped, and more than 1% malformed lines is an error.
    """
    if fmt not in FORMATS:
        raise UsageError(f"unknown format {fmt!r}; choose from {', '.join(FORMATS)}")
    path = Path(path)
    out: list[tuple] = []
    bad = 0
    seen = 0
    delim: str | None = "::" if fmt == "movielens-dat" else None
    detected = fmt == "movielens-dat"
    with path.open("r", encoding="utf-8", errors="replace") as fh:
        for raw in fh:
            line = raw.strip()
            if not line or line[0] in "#%":
                continue
            if not detected:
                delim = _detect_delimiter(line)
                detected = True
            seen += 1
            parts = line.split(delim) if delim else line.split()
            try:
                if len(parts) < 3:
                    raise ValueError(line)
                r = float(parts[2])
                if not math.isfinite(r):
                    raise ValueError(line)
                u, v = parts[0].strip(), parts[1].strip()
                if not u or not v:
                    raise ValueError(line)
            except ValueError:
                if seen == 1 and fmt != "movielens-dat":
                    seen = 0  # header row
                    continue
                bad += 1
                continue
            out.append((_as_id(u), _as_id(v), r))
    if bad:
        log.warning("%s: skipped %d malformed line(s) of %d", path, bad, seen)
        if bad > MAX_MALFORMED_FRACTION * seen:
            raise FormatError(f"{path}: {bad} of {seen} lines malformed for format {fmt!r}")
    return out


@dataclass
class Dataset:
    train: HdsMatrix
    test: RatingSet
    row_ids: list          # raw ID of every dense row index
    col_ids: list
    meta: dict = field(default_factory=dict)

    @property
    def row_id_map(self) -> dict:
        return {raw: k for k, raw in enumerate(self.row_ids)}

    @property
    def col_id_map(self) -> dict:
        return {raw: k for k, raw in enumerate(self.col_ids)}

    @property
    def n_rows(self) -> int:
        return self.train.n_rows

    @property
    def n_cols(self) -> int:
        return self.train.n_cols


def _first_seen_codes(ids: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Dense codes numbered by first appearance, plus the raw value of each code."""
    uniq, first, inverse = np.unique(ids, return_index=True, return_inverse=True)
    order = np.argsort(first, kind="stable")
    rank = np.empty(order.shape[0], dtype=np.int64)
    rank[order] = np.arange(order.shape[0])
    return rank[inverse.ravel()], uniq[order]


def _columns(triples) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    if isinstance(triples, tuple) and len(triples) == 3 and isinstance(triples[0], np.ndarray):
        return np.asarray(triples[0]), np.asarray(triples[1]), np.asarray(triples[2], dtype=np.float64)
    if len(triples) == 0:
        return np.empty(0, np.int64), np.empty(0, np.int64), np.empty(0)
    us, vs, rs = zip(*triples)
    return np.asarray(us), np.asarray(vs), np.asarray(rs, dtype=np.float64)


def _plain(values: np.ndarray) -> list:
    return [x.item() if hasattr(x, "item") else x for x in values]


def split(triples: Sequence[tuple] | tuple, train_fraction: float = 0.7, seed: int = 0,
          source: str = "") -> Dataset:
    """Remap raw IDs densely and split into train/test under a seeded shuffle.

    ``triples`` is a sequence of ``(raw_u, raw_v, r)`` or a tuple of three
    equal-length arrays. Duplicate (u, v) pairs keep their last occurrence.
    """
    if not 0.0 < train_fraction < 1.0:
        raise UsageError("train_fraction must lie strictly between 0 and 1")
    raw_u, raw_v, vals = _columns(triples)
    if vals.shape[0] < MIN_TRIPLES:
        raise UsageError(f"need at least {MIN_TRIPLES} triples to split, got {vals.shape[0]}")
    rows, row_ids = _first_seen_codes(raw_u)
    cols, col_ids = _first_seen_codes(raw_v)
    n_rows, n_cols = row_ids.shape[0], col_ids.shape[0]

    key = rows * n_cols + cols
    _, last_rev = np.unique(key[::-1], return_index=True)
    keep = np.sort(key.shape[0] - 1 - last_rev)
    if keep.shape[0] != key.shape[0]:
        log.warning("dropped %d duplicate (u, v) entries, keeping the last occurrence",
                    key.shape[0] - keep.shape[0])
        rows, cols, vals = rows[keep], cols[keep], vals[keep]

    n = vals.shape[0]
    perm = np.random.default_rng(seed).permutation(n)
    n_train = int(math.floor(n * train_fraction + 0.5))
    tr, te = perm[:n_train], perm[n_train:]
    train = HdsMatrix(n_rows, n_cols, rows[tr], cols[tr], vals[tr])
    test = RatingSet(rows[te].copy(), cols[te].copy(), vals[te].copy())
    meta = {"source": source, "n_rows": n_rows, "n_cols": n_cols, "nnz": n,
            "n_train": int(n_train), "n_test": int(n - n_train),
            "train_fraction": train_fraction, "seed": seed}
    return Dataset(train, test, _plain(row_ids), _plain(col_ids), meta)


def load_ratings(path, fmt: str, train_fraction: float = 0.7, seed: int = 0) -> Dataset:
    return split(parse_ratings(path, fmt), train_fraction, seed, source=str(path))


# -- binary cache -----------------------------------------------------------
#
# magic "HDSD" | u16 version | u32 header length | header JSON (utf-8) |
# train rows i64 | train cols i64 | train vals f64 | test rows | test cols | test vals
# All integers little-endian; array lengths come from the header.

def save_dataset(ds: Dataset, path) -> None:
    header = dict(ds.meta, row_ids=ds.row_ids, col_ids=ds.col_ids,
                  n_rows=ds.n_rows, n_cols=ds.n_cols,
                  n_train=ds.train.nnz, n_test=len(ds.test))
    blob = json.dumps(header).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CACHE_MAGIC)
        fh.write(struct.pack("<HI", CACHE_VERSION, len(blob)))
        fh.write(blob)
        for arr, dt in ((ds.train.rows, "<i8"), (ds.train.cols, "<i8"), (ds.train.vals, "<f8"),
                        (ds.test.rows, "<i8"), (ds.test.cols, "<i8"), (ds.test.vals, "<f8")):
            fh.write(np.ascontiguousarray(arr, dtype=dt).tobytes())


def load_dataset(path) -> Dataset:
    data = Path(path).read_bytes()
    if len(data) < 10 or data[:4] != CACHE_MAGIC:
        raise CacheError(f"{path}: not a dataset cache (bad magic)")
    version, hlen = struct.unpack_from("<HI", data, 4)
    if version != CACHE_VERSION:
        raise CacheError(f"{path}: unsupported cache version {version}")
    off = 10
    try:
        header = json.loads(data[off:off + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CacheError(f"{path}: corrupt header") from exc
    off += hlen
    arrays = []
    for count, dt in ((header["n_train"], "<i8"), (header["n_train"], "<i8"), (header["n_train"], "<f8"),
                      (header["n_test"], "<i8"), (header["n_test"], "<i8"), (header["n_test"], "<f8")):
        nbytes = 8 * count
        if off + nbytes > len(data):
            raise CacheError(f"{path}: truncated")
        arrays.append(np.frombuffer(data, dtype=dt, count=count, offset=off).astype(dt[1:]))
        off += nbytes
    row_ids, col_ids = header.pop("row_ids"), header.pop("col_ids")
    train = HdsMatrix(header["n_rows"], header["n_cols"], *arrays[:3])
    test = RatingSet(*arrays[3:])
    meta = {k: header[k] for k in ("source", "n_rows", "n_cols", "nnz", "n_train", "n_test",
                                   "train_fraction", "seed") if k in header}
    return Dataset(train, test, row_ids, col_ids, meta)
