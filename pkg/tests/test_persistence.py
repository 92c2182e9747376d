import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hdsf.core import FactorModel
from hdsf.persistence import CorruptModelError, UnsupportedVersionError, load_model, save_model


def sample_model(seed=0, rows=7, cols=5, d=3):
    rng = np.random.default_rng(seed)
    return FactorModel(rng.normal(size=(rows, d)), rng.normal(size=(cols, d)),
                       rng.normal(size=(rows, d)), rng.normal(size=(cols, d)))


MAPS = {"rows": [10, 11, "x", 13, 14, 15, 16], "cols": ["a", "b", "c", "d", "e"]}


def test_round_trip(tmp_path):
    model = sample_model()
    path = tmp_path / "m.hdsm"
    save_model(model, MAPS, path)
    loaded, maps = load_model(path)
    assert np.array_equal(loaded.m, model.m) and np.array_equal(loaded.n, model.n)
    assert not loaded.phi.any() and not loaded.psi.any()
    assert maps == MAPS


def test_header_layout(tmp_path):
    path = tmp_path / "m.hdsm"
    save_model(sample_model(rows=7, cols=5, d=3), MAPS, path)
    raw = path.read_bytes()
    assert raw[:4] == b"HDSM"
    assert struct.unpack_from("<HIQQ", raw, 4) == (1, 3, 7, 5)
    first = struct.unpack_from("<d", raw, 4 + 2 + 4 + 8 + 8)[0]
    assert first == sample_model().m[0, 0]


def test_refuses_overwrite(tmp_path):
    path = tmp_path / "m.hdsm"
    save_model(sample_model(), MAPS, path)
    with pytest.raises(FileExistsError):
        save_model(sample_model(1), MAPS, path)
    save_model(sample_model(1), MAPS, path, force=True)
    assert np.array_equal(load_model(path)[0].m, sample_model(1).m)


@pytest.mark.parametrize("cut", [3, 20, 60, -3])
def test_truncated(tmp_path, cut):
    path = tmp_path / "m.hdsm"
    save_model(sample_model(), MAPS, path)
    path.write_bytes(path.read_bytes()[:cut])
    with pytest.raises(CorruptModelError):
        load_model(path)


def test_bad_magic_and_version(tmp_path):
    path = tmp_path / "m.hdsm"
    save_model(sample_model(), MAPS, path)
    raw = bytearray(path.read_bytes())
    path.write_bytes(b"XXXX" + bytes(raw[4:]))
    with pytest.raises(CorruptModelError):
        load_model(path)
    raw[4:6] = struct.pack("<H", 2)
    path.write_bytes(bytes(raw))
    with pytest.raises(UnsupportedVersionError):
        load_model(path)


def test_rejects_non_finite(tmp_path):
    model = sample_model()
    model.n[2, 1] = np.inf
    path = tmp_path / "m.hdsm"
    save_model(model, MAPS, path)
    with pytest.raises(CorruptModelError):
        load_model(path)


@given(st.integers(1, 6), st.integers(1, 6), st.integers(1, 4), st.integers(0, 2**32 - 1))
@settings(max_examples=30, deadline=None)
def test_round_trip_property(tmp_path_factory, rows, cols, d, seed):
    path = tmp_path_factory.mktemp("rt") / "m.hdsm"
    model = sample_model(seed, rows, cols, d)
    save_model(model, None, path)
    loaded, maps = load_model(path)
    assert np.array_equal(loaded.m, model.m) and np.array_equal(loaded.n, model.n)
    assert maps == {"rows": [], "cols": []}
