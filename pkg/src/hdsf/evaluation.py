"""Test-set accuracy metrics."""

from __future__ import annotations

import math

import numpy as np

from .core import FactorModel, UsageError, as_rating_set

CHUNK = 4096


def residuals(model: FactorModel, test, clamp: tuple[float, float] | None = None) -> np.ndarray:
    data = as_rating_set(test)
    if len(data) == 0:
        raise UsageError("test set is empty")
    pred = np.einsum("ij,ij->i", model.m[data.rows], model.n[data.cols])
    if clamp is not None:
        np.clip(pred, clamp[0], clamp[1], out=pred)
    return data.vals - pred


def _chunked_sum(x: np.ndarray) -> float:
    # Fixed chunking keeps the summation order independent of how callers split work.
    parts = [float(np.sum(x[s:s + CHUNK])) for s in range(0, x.shape[0], CHUNK)]
    return float(np.sum(np.asarray(parts)))


def rmse(model: FactorModel, test, clamp: tuple[float, float] | None = None) -> float:
    res = residuals(model, test, clamp)
    return math.sqrt(_chunked_sum(res * res) / res.shape[0])


def mae(model: FactorModel, test, clamp: tuple[float, float] | None = None) -> float:
    res = residuals(model, test, clamp)
    return _chunked_sum(np.abs(res)) / res.shape[0]


def rmse_mae(model: FactorModel, test, clamp: tuple[float, float] | None = None) -> tuple[float, float]:
    res = residuals(model, test, clamp)
    n = res.shape[0]
    return math.sqrt(_chunked_sum(res * res) / n), _chunked_sum(np.abs(res)) / n
