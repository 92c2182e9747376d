import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hdsf.core import (FactorModel, HdsMatrix, RatingSet, RatingTriple, TrainConfig, UsageError,
                       instance_loss, predict, total_loss)


def model_from(m, n):
    return FactorModel(np.atleast_2d(np.asarray(m, float)), np.atleast_2d(np.asarray(n, float)))


def test_predict_examples():
    assert predict(model_from([[0.0, 0.0]], [[7.0, -3.0]]), 0, 0) == 0.0
    assert predict(model_from([[1.0, 0.0]], [[3.5, 99.0]]), 0, 0) == 3.5
    assert predict(model_from([[0.5, 2.0]], [[4.0, 0.25]]), 0, 0) == 2.5


def test_predict_index_checked():
    model = model_from([[1.0]], [[1.0]])
    with pytest.raises(UsageError):
        predict(model, 1, 0)
    with pytest.raises(UsageError):
        predict(model, 0, -1)


def test_instance_loss_examples():
    assert instance_loss(model_from([[1.0, 2.0]], [[2.0, 0.5]]), RatingTriple(0, 0, 3.0), 0.0) == 0.0
    assert instance_loss(model_from([[0.0]], [[0.0]]), RatingTriple(0, 0, 2.0), 0.0) == 2.0
    assert instance_loss(model_from([[1.0, 0.0]], [[1.0, 0.0]]), RatingTriple(0, 0, 1.0), 0.5) == 0.5


def test_total_loss_small_cases():
    model = model_from([[1.0, 0.0], [1.0, 0.0]], [[1.0, 0.0]])
    assert total_loss(model, HdsMatrix(2, 1, [], [], []), 0.5) == 0.0
    two = HdsMatrix(2, 1, [0, 1], [0, 0], [1.0, 1.0])
    assert total_loss(model, two, 0.5) == 1.0


def test_total_loss_matches_double_loop(rng):
    dense = rng.normal(size=(5, 5))
    mask = rng.random((5, 5)) < 0.6
    rows, cols = np.nonzero(mask)
    mat = HdsMatrix(5, 5, rows, cols, dense[rows, cols])
    model = FactorModel(rng.normal(size=(5, 3)), rng.normal(size=(5, 3)))
    lam = 0.3
    expected = 0.0
    for u in range(5):
        for v in range(5):
            if mask[u, v]:
                pred = sum(model.m[u, k] * model.n[v, k] for k in range(3))
                reg = sum(x * x for x in model.m[u]) + sum(x * x for x in model.n[v])
                expected += 0.5 * ((dense[u, v] - pred) ** 2 + lam * reg)
    assert total_loss(model, mat, lam) == pytest.approx(expected, rel=1e-12)


def test_total_loss_dimension_mismatch():
    model = model_from([[1.0]], [[1.0]])
    with pytest.raises(UsageError):
        total_loss(model, HdsMatrix(2, 1, [1], [0], [1.0]), 0.0)


vec = st.lists(st.floats(-10, 10), min_size=3, max_size=3)


@given(vec, vec, st.floats(-5, 5))
def test_predict_is_bilinear(m, n, alpha):
    base = predict(model_from([m], [n]), 0, 0)
    scaled = predict(model_from([[alpha * x for x in m]], [n]), 0, 0)
    assert scaled == pytest.approx(alpha * base, rel=1e-9, abs=1e-9)


@given(vec, vec, st.floats(-20, 20), st.floats(0, 5))
def test_instance_loss_nonnegative(m, n, r, lam):
    model = model_from([m], [n])
    loss = instance_loss(model, RatingTriple(0, 0, r), lam)
    assert loss >= 0.0
    if loss == 0.0:
        # zero loss means zero error, up to squares that underflow
        assert abs(r - predict(model, 0, 0)) < 1e-150


def test_matrix_indexes_sorted_and_consistent(rng):
    rows = rng.integers(0, 20, 200)
    cols = rng.integers(0, 15, 200)
    keys = np.unique(rows * 15 + cols)
    rows, cols = np.divmod(rng.permutation(keys), 15)
    vals = rng.normal(size=rows.size)
    mat = HdsMatrix(20, 15, rows, cols, vals)
    assert mat.nnz == keys.size
    assert np.array_equal(mat.row_degree, np.bincount(rows, minlength=20))
    assert np.array_equal(mat.col_degree, np.bincount(cols, minlength=15))
    for u in range(20):
        assert np.all(mat.rows[mat.row_entries(u)] == u)
    for v in range(15):
        assert np.all(mat.cols[mat.col_entries(v)] == v)
    got = {(t.u, t.v): t.r for t in mat.triples()}
    assert got == {(int(a), int(b)): float(c) for a, b, c in zip(rows, cols, vals)}


def test_matrix_rejects_bad_input():
    with pytest.raises(UsageError):
        HdsMatrix(2, 2, [0, 0], [1, 1], [1.0, 2.0])
    with pytest.raises(UsageError):
        HdsMatrix(2, 2, [2], [0], [1.0])
    with pytest.raises(UsageError):
        HdsMatrix(2, 2, [0], [0], [math.nan])


def test_matrix_from_triples_infers_shape():
    mat = HdsMatrix.from_triples([RatingTriple(2, 0, 1.0), RatingTriple(0, 3, 2.0)])
    assert mat.shape == (3, 4)
    assert isinstance(RatingSet.from_triples(mat.triples()), RatingSet)


def test_initialize_range_and_seed():
    a = FactorModel.initialize(30, 40, 4, seed=9)
    b = FactorModel.initialize(30, 40, 4, seed=9)
    assert np.array_equal(a.m, b.m) and np.array_equal(a.n, b.n)
    assert a.m.min() >= 0 and a.m.max() < 0.5
    assert not a.phi.any() and not a.psi.any()
    with pytest.raises(UsageError):
        FactorModel.initialize(3, 40, 4)


@pytest.mark.parametrize("kw", [dict(lam=-1), dict(eta=0), dict(gamma=1.0), dict(d=0),
                                dict(threads=0), dict(algorithm="sgd"), dict(clamp=(5, 1)),
                                dict(partition="metis"), dict(optimizer="adam")])
def test_config_validation(kw):
    with pytest.raises(UsageError):
        TrainConfig(**kw)
