import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hdsf.core import FactorModel, RatingSet, RatingTriple, UsageError
from hdsf.evaluation import mae, rmse, rmse_mae


def unit_model(n_rows, n_cols, value=1.0):
    return FactorModel(np.full((n_rows, 1), value), np.ones((n_cols, 1)))


def test_perfect_predictions():
    model = FactorModel(np.array([[1.0, 2.0]]), np.array([[3.0, 1.0], [0.0, 1.0]]))
    test = [RatingTriple(0, 0, 5.0), RatingTriple(0, 1, 2.0)]
    assert rmse(model, test) == 0.0 and mae(model, test) == 0.0


def test_residual_examples():
    test = [RatingTriple(0, 0, 2.0), RatingTriple(0, 1, 0.0)]  # predictions 1, residuals (1, -1)
    assert rmse(unit_model(1, 2), test) == 1.0
    assert mae(unit_model(1, 2), test) == 1.0


def test_zero_model_constant_ratings():
    test = [RatingTriple(u, v, 3.0) for u in range(3) for v in range(2)]
    assert rmse(unit_model(3, 2, 0.0), test) == 3.0


def test_clamp():
    model = unit_model(1, 1, 9.0)
    test = [RatingTriple(0, 0, 5.0)]
    assert rmse(model, test) == 4.0
    assert rmse(model, test, clamp=(1.0, 5.0)) == 0.0


def test_empty_test_set():
    with pytest.raises(UsageError):
        rmse(unit_model(1, 1), [])


def naive(model, rows, cols, vals):
    sq = ab = 0.0
    for u, v, r in zip(rows, cols, vals):
        e = r - sum(model.m[u, k] * model.n[v, k] for k in range(model.d))
        sq += e * e
        ab += abs(e)
    return math.sqrt(sq / len(vals)), ab / len(vals)


@pytest.mark.parametrize("size", [1, 4095, 4097, 100_000])
def test_matches_naive_reference(size):
    rng = np.random.default_rng(size)
    model = FactorModel(rng.normal(size=(50, 3)), rng.normal(size=(60, 3)))
    rows, cols, vals = rng.integers(0, 50, size), rng.integers(0, 60, size), rng.normal(scale=2, size=size)
    got = rmse_mae(model, RatingSet(rows, cols, vals))
    want = naive(model, rows, cols, vals)
    assert got[0] == pytest.approx(want[0], rel=1e-12)
    assert got[1] == pytest.approx(want[1], rel=1e-12)


# magnitudes below ~1e-150 underflow when squared, which says nothing about the metrics
residual = st.floats(-100, 100).filter(lambda x: x == 0 or abs(x) > 1e-100)


@given(st.lists(residual, min_size=1, max_size=300), st.integers(0, 2**32 - 1))
@settings(max_examples=100, deadline=None)
def test_mae_le_rmse_and_permutation_invariant(ratings, seed):
    n = len(ratings)
    model = FactorModel(np.zeros((n, 1)), np.zeros((1, 1)))
    data = RatingSet(np.arange(n), np.zeros(n, dtype=np.int64), np.array(ratings))
    r, a = rmse_mae(model, data)
    assert a <= r * (1 + 1e-12) + 1e-300
    perm = np.random.default_rng(seed).permutation(n)
    shuffled = RatingSet(data.rows[perm], data.cols[perm], data.vals[perm])
    r2, a2 = rmse_mae(model, shuffled)
    assert r2 == pytest.approx(r, rel=1e-12, abs=1e-300)
    assert a2 == pytest.approx(a, rel=1e-12, abs=1e-300)
