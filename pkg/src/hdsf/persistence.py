"""Binary model checkpoints.

Layout (all integers little-endian)::

    magic    4 bytes  b"HDSM"
    version  u16
    d        u32
    n_rows   u64
    n_cols   u64
    M        n_rows*d float64, row-major
    N        n_cols*d float64, row-major
    maps_len u64
    maps     maps_len bytes of UTF-8 JSON {"rows": [...], "cols": [...]}

Momentum is not stored; loaded models start with zero momentum.
"""

from __future__ import annotations

import json
import os
import struct
from pathlib import Path

import numpy as np

from .core import FactorModel, HdsError

MAGIC = b"HDSM"
VERSION = 1
_HEAD = struct.Struct("<4sHIQQ")


class CorruptModelError(HdsError):
    pass


class UnsupportedVersionError(HdsError):
    pass


def save_model(model: FactorModel, maps: dict | None, path, force: bool = False) -> None:
    path = Path(path)
    if path.exists() and not force:
        raise FileExistsError(f"{path} exists; pass force=True to overwrite")
    maps = maps or {"rows": [], "cols": []}
    blob = json.dumps({"rows": list(maps.get("rows", [])), "cols": list(maps.get("cols", []))}).encode("utf-8")
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(_HEAD.pack(MAGIC, VERSION, model.d, model.n_rows, model.n_cols))
        fh.write(np.ascontiguousarray(model.m, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(model.n, dtype="<f8").tobytes())
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
    os.replace(tmp, path)


def load_model(path) -> tuple[FactorModel, dict]:
    data = Path(path).read_bytes()
    if len(data) < _HEAD.size:
        raise CorruptModelError(f"{path}: truncated header")
    magic, version, d, n_rows, n_cols = _HEAD.unpack_from(data, 0)
    if magic != MAGIC:
        raise CorruptModelError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise UnsupportedVersionError(f"{path}: model format version {version} is not supported (expected {VERSION})")
    off = _HEAD.size
    need = 8 * d * (n_rows + n_cols) + 8
    if off + need > len(data):
        raise CorruptModelError(f"{path}: truncated factor data")
    m = np.frombuffer(data, "<f8", n_rows * d, off).reshape(n_rows, d).astype(np.float64)
    off += 8 * n_rows * d
    n = np.frombuffer(data, "<f8", n_cols * d, off).reshape(n_cols, d).astype(np.float64)
    off += 8 * n_cols * d
    (blen,) = struct.unpack_from("<Q", data, off)
    off += 8
    if off + blen != len(data):
        raise CorruptModelError(f"{path}: id map section has wrong length")
    try:
        maps = json.loads(data[off:off + blen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptModelError(f"{path}: corrupt id maps") from exc
    if not (np.isfinite(m).all() and np.isfinite(n).all()):
        raise CorruptModelError(f"{path}: non-finite factor values")
    return FactorModel(m, n), maps
