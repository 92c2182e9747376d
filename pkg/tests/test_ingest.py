import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hdsf.core import UsageError
from hdsf.ingest import CacheError, FormatError, load_dataset, load_ratings, parse_ratings, save_dataset, split
from hdsf.reference import ML1M_RATINGS


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_movielens_line(tmp_path):
    path = write(tmp_path, "r.dat", "1::1193::5::978300760\n1::661::3::978302109\n")
    assert parse_ratings(path, "movielens-dat") == [(1, 1193, 5.0), (1, 661, 3.0)]


def test_empty_file(tmp_path):
    assert parse_ratings(write(tmp_path, "e.tsv", ""), "tsv") == []


def test_tsv_and_csv(tmp_path):
    assert parse_ratings(write(tmp_path, "a.tsv", "42\t7\t3.5\n"), "tsv") == [(42, 7, 3.5)]
    csv_text = "user,item,rating\n# comment\nu1,i9,4\n\nu2,i9,2.5\n"
    assert parse_ratings(write(tmp_path, "a.csv", csv_text), "csv") == [("u1", "i9", 4.0), ("u2", "i9", 2.5)]
    ws = "% epinions style\n1 2 5\n3   4 1\n"
    assert parse_ratings(write(tmp_path, "w.tsv", ws), "tsv") == [(1, 2, 5.0), (3, 4, 1.0)]


def test_malformed_lines(tmp_path, caplog):
    good = "".join(f"{u}::{u + 1}::3::0\n" for u in range(200))
    with caplog.at_level(logging.WARNING):
        out = parse_ratings(write(tmp_path, "ok.dat", good + "garbage\n"), "movielens-dat")
    assert len(out) == 200 and "malformed" in caplog.text
    with pytest.raises(FormatError):
        parse_ratings(write(tmp_path, "bad.dat", good + "x\ny\nz\n"), "movielens-dat")


def test_missing_file(tmp_path):
    with pytest.raises(OSError):
        parse_ratings(tmp_path / "nope.dat")


def triples(n, seed=0):
    rng = np.random.default_rng(seed)
    keys = rng.choice(10_000, size=n, replace=False)
    return [(int(k // 100) + 1000, f"item{k % 100}", float(rng.integers(1, 6))) for k in keys]


def test_split_counts_and_rejects():
    ds = split(triples(10), 0.7, seed=4)
    assert ds.train.nnz == 7 and len(ds.test) == 3
    with pytest.raises(UsageError):
        split(triples(9), 0.7)
    with pytest.raises(UsageError):
        split(triples(20), 1.0)


def test_split_movielens_size():
    # |train| for the published rating count under the 70/30 rule
    n_train = int(np.floor(ML1M_RATINGS * 0.7 + 0.5))
    assert n_train == 700_146


def test_remap_first_seen_order():
    data = [("b", "y", 1.0), ("a", "x", 2.0), ("b", "x", 3.0)] + [(f"u{k}", "z", 1.0) for k in range(7)]
    ds = split(data, 0.5, seed=0)
    assert ds.row_ids[:2] == ["b", "a"] and ds.col_ids == ["y", "x", "z"]
    assert ds.row_id_map["a"] == 1


def test_duplicates_keep_last(caplog):
    data = triples(12) + [(1000, "item0", 9.0)]
    data.insert(0, (1000, "item0", 1.0))
    with caplog.at_level(logging.WARNING):
        ds = split(data, 0.5, seed=1)
    assert "duplicate" in caplog.text
    u, v = ds.row_id_map[1000], ds.col_id_map["item0"]
    found = [r for t in (ds.train.triples(), ds.test.triples()) for (a, b, r) in t if (a, b) == (u, v)]
    assert found == [9.0]
    assert ds.meta["nnz"] == 13


@given(st.integers(10, 300), st.integers(0, 2**32 - 1), st.floats(0.05, 0.95))
@settings(max_examples=40, deadline=None)
def test_split_deterministic_and_in_range(n, seed, frac):
    a = split(triples(n, seed % 1000), frac, seed)
    b = split(triples(n, seed % 1000), frac, seed)
    for x, y in ((a.train.rows, b.train.rows), (a.train.vals, b.train.vals), (a.test.cols, b.test.cols)):
        assert np.array_equal(x, y)
    assert np.all(a.test.rows < a.n_rows) and np.all(a.test.cols < a.n_cols)
    assert a.train.nnz + len(a.test) == n


def test_cache_round_trip(tmp_path):
    path = write(tmp_path, "r.dat", "".join(f"{k % 13}::{k % 17}::{k % 5 + 1}::0\n" for k in range(150)))
    ds = load_ratings(path, "movielens-dat", 0.7, seed=2)
    cache = tmp_path / "r.hdsd"
    save_dataset(ds, cache)
    assert cache.read_bytes()[:4] == b"HDSD"
    back = load_dataset(cache)
    assert back.row_ids == ds.row_ids and back.col_ids == ds.col_ids
    assert np.array_equal(back.train.vals, ds.train.vals)
    assert np.array_equal(back.test.rows, ds.test.rows)
    assert back.meta == ds.meta
    cache.write_bytes(cache.read_bytes()[:-5])
    with pytest.raises(CacheError):
        load_dataset(cache)
    cache.write_bytes(b"nope" * 10)
    with pytest.raises(CacheError):
        load_dataset(cache)
