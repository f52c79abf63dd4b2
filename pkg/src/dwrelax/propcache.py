"""On-disk cache of ladder propagators.

File layout (little endian): an 8-byte magic ``b"DWRPROP\\0"``, ``uint16``
format version, ``uint16`` reserved, ``uint32`` squaring level, ``uint64``
dimension, ``float64`` base step, the 32-byte SHA-256 key, then the matrix as
``complex128`` in column-major order. Loads are bit-identical to the stored
matrix; any header mismatch is treated as a miss.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import struct
from pathlib import Path

import numpy as np

__all__ = ["PropagatorCache", "cache_key", "default_cache_dir", "MAGIC", "FORMAT_VERSION"]

log = logging.getLogger(__name__)

MAGIC = b"DWRPROP\0"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<8sHHIQd32s")


def default_cache_dir():
    """``$DWRELAX_CACHE_DIR`` if set, else ``None`` (caching disabled)."""
    env = os.environ.get("DWRELAX_CACHE_DIR")
    return Path(env) if env else None


def cache_key(**fields) -> bytes:
    """SHA-256 over a canonical JSON rendering of the generator parameters."""
    blob = json.dumps(fields, sort_keys=True, default=repr).encode()
    return hashlib.sha256(blob).digest()


class PropagatorCache:
    def __init__(self, directory):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self.hits = 0
        self.misses = 0

    def _path(self, key: bytes, dt: float, level: int) -> Path:
        tag = hashlib.sha256(key + struct.pack("<d", dt)).hexdigest()[:24]
        return self.directory / f"{tag}.L{level:02d}.prop"

    def store(self, key: bytes, dt: float, level: int, matrix: np.ndarray):
        m = np.asarray(matrix, dtype="<c16")
        dim = m.shape[0]
        header = _HEADER.pack(MAGIC, FORMAT_VERSION, 0, level, dim, dt, key)
        path = self._path(key, dt, level)
        tmp = path.with_suffix(".tmp")
        with open(tmp, "wb") as fh:
            fh.write(header)
            fh.write(m.tobytes(order="F"))
        os.replace(tmp, path)

    def load(self, key: bytes, dt: float, level: int):
        path = self._path(key, dt, level)
        try:
            raw = path.read_bytes()
        except FileNotFoundError:
            self.misses += 1
            return None
        if len(raw) < _HEADER.size:
            log.warning("truncated cache file %s", path)
            self.misses += 1
            return None
        magic, version, _, lvl, dim, step, k = _HEADER.unpack_from(raw)
        if magic != MAGIC or version != FORMAT_VERSION or lvl != level or step != dt or k != key:
            log.warning("cache header mismatch in %s", path)
            self.misses += 1
            return None
        body = raw[_HEADER.size:]
        if len(body) != 16 * dim * dim:
            log.warning("cache body size mismatch in %s", path)
            self.misses += 1
            return None
        self.hits += 1
        # C order like freshly computed levels, so the products take the same BLAS path
        return np.ascontiguousarray(np.frombuffer(body, dtype="<c16").reshape((dim, dim), order="F"), dtype=complex)
