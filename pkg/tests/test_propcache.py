import struct

import numpy as np
import pytest

from dwrelax.propcache import FORMAT_VERSION, MAGIC, PropagatorCache, cache_key, default_cache_dir

KEY = cache_key(N=4, U=10.0, kind="redfield")


def matrix(n=9, seed=0):
    rng = np.random.default_rng(seed)
    return rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))


def only_file(tmp_path):
    files = list(tmp_path.glob("*.prop"))
    assert len(files) == 1
    return files[0]


def test_round_trip_bit_identical(tmp_path):
    c = PropagatorCache(tmp_path)
    m = matrix()
    c.store(KEY, 0.125, 3, m)
    out = c.load(KEY, 0.125, 3)
    assert np.array_equal(out, m) and out.flags.c_contiguous
    assert c.hits == 1 and c.misses == 0
    assert not list(tmp_path.glob("*.tmp"))


def test_header_layout(tmp_path):
    m = matrix(4)
    PropagatorCache(tmp_path).store(KEY, 0.5, 7, m)
    raw = only_file(tmp_path).read_bytes()
    magic, version, reserved, level, dim, dt, key = struct.unpack_from("<8sHHIQd32s", raw)
    assert (magic, version, reserved, level, dim, dt, key) == (MAGIC, FORMAT_VERSION, 0, 7, 4, 0.5, KEY)
    body = np.frombuffer(raw[struct.calcsize("<8sHHIQd32s"):], dtype="<c16")
    assert np.array_equal(body, m.reshape(-1, order="F"))


def test_misses(tmp_path):
    c = PropagatorCache(tmp_path)
    c.store(KEY, 0.5, 1, matrix(3))
    assert c.load(KEY, 0.5, 2) is None
    assert c.load(KEY, 0.25, 1) is None
    assert c.load(cache_key(N=5), 0.5, 1) is None
    assert c.misses == 3


def test_corrupt_files_are_misses(tmp_path):
    c = PropagatorCache(tmp_path)
    c.store(KEY, 0.5, 1, matrix(3))
    f = only_file(tmp_path)
    raw = f.read_bytes()
    f.write_bytes(raw[:20])
    assert c.load(KEY, 0.5, 1) is None
    f.write_bytes(raw[:-16])
    assert c.load(KEY, 0.5, 1) is None
    f.write_bytes(b"XXXXXXXX" + raw[8:])
    assert c.load(KEY, 0.5, 1) is None


def test_key_canonical():
    assert cache_key(a=1, b=2.0) == cache_key(b=2.0, a=1)
    assert cache_key(a=1) != cache_key(a=2)
    assert len(cache_key(a=1)) == 32


def test_env(monkeypatch, tmp_path):
    monkeypatch.delenv("DWRELAX_CACHE_DIR", raising=False)
    assert default_cache_dir() is None
    monkeypatch.setenv("DWRELAX_CACHE_DIR", str(tmp_path))
    assert default_cache_dir() == tmp_path
