"""Binary spectrum cache.

Layout (little-endian)::

    b"MBTH" | u32 version | u32 N | u64 dim | 8 x f64 params
    | dim x f64 energies | dim*dim x f64 eigenvectors (column-major)
    | u32 CRC-32 of everything before it

The eigenvector block is streamed in column chunks so writing and reading
never hold a second copy of the matrix.
"""
from __future__ import annotations

import os
import struct
import zlib
from pathlib import Path

import numpy as np

from .model import ModelParams
from .spectrum import Spectrum

MAGIC = b"MBTH"
VERSION = 1
_HEADER = struct.Struct("<4sIIQ8d")
_CHUNK_BYTES = 64 * 2**20


class CacheError(OSError):
    pass


class CorruptCacheError(CacheError):
    pass


class CacheVersionError(CacheError):
    pass


class ParameterMismatchError(CacheError):
    pass


def cache_path(cache_dir, N: int) -> Path:
    return Path(cache_dir) / f"spectrum_N{N}.mbth"


def _column_chunks(V: np.ndarray):
    step = max(1, _CHUNK_BYTES // (8 * max(V.shape[0], 1)))
    for start in range(0, V.shape[1], step):
        yield start, min(start + step, V.shape[1])


def write_cache(path, params: ModelParams, s: Spectrum) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    dim = len(s.energies)
    tmp = path.with_suffix(path.suffix + ".tmp")
    crc = 0
    with open(tmp, "wb") as fh:
        def put(buf):
            nonlocal crc
            crc = zlib.crc32(buf, crc)
            fh.write(buf)

        put(_HEADER.pack(MAGIC, VERSION, params.N, dim, *params.as_block()))
        put(np.ascontiguousarray(s.energies, dtype="<f8").tobytes())
        V = s.vectors
        for a, b in _column_chunks(V):
            # V.T rows are V columns, so this emits column-major order
            put(np.ascontiguousarray(V[:, a:b].T, dtype="<f8").tobytes())
        fh.write(struct.pack("<I", crc & 0xFFFFFFFF))
    os.replace(tmp, path)
    return path


def _read_header(fh):
    raw = fh.read(_HEADER.size)
    if len(raw) < _HEADER.size:
        raise CorruptCacheError("file shorter than header")
    magic, version, N, dim, *block = _HEADER.unpack(raw)
    if magic != MAGIC:
        raise CorruptCacheError(f"bad magic {magic!r}")
    if version != VERSION:
        raise CacheVersionError(f"cache version {version}, expected {VERSION}")
    return raw, N, dim, block


def verify_cache(path, params: ModelParams | None = None) -> dict:
    """Check magic, version, CRC and parameter block without keeping the payload.

    Returns the header fields.  ``params`` defaults to the parameters derived
    from the stored ``N``.
    """
    path = Path(path)
    size = path.stat().st_size
    with open(path, "rb") as fh:
        raw, N, dim, block = _read_header(fh)
        expected = _HEADER.size + 8 * dim * (dim + 1) + 4
        if size != expected:
            raise CorruptCacheError(f"size {size} != expected {expected}")
        crc = zlib.crc32(raw)
        remaining = size - _HEADER.size - 4
        while remaining:
            buf = fh.read(min(remaining, _CHUNK_BYTES))
            if not buf:
                raise CorruptCacheError("unexpected end of file")
            crc = zlib.crc32(buf, crc)
            remaining -= len(buf)
        (stored,) = struct.unpack("<I", fh.read(4))
    if stored != crc & 0xFFFFFFFF:
        raise CorruptCacheError("CRC mismatch")
    _check_params(N, dim, block, params)
    return {"N": N, "dim": dim, "params": block}


def _check_params(N, dim, block, params):
    if params is None:
        if N < 2:
            raise CorruptCacheError(f"implausible size N={N} in header")
        params = ModelParams.from_size(N)
    want = params.as_block()
    if N != params.N or not np.array_equal(np.asarray(block), np.asarray(want)):
        raise ParameterMismatchError(f"cache built for N={N} {block}, expected N={params.N} {want}")


def read_cache(path, params: ModelParams | None = None) -> Spectrum:
    """Load a cached spectrum, validating header, size, parameters and CRC."""
    path = Path(path)
    size = path.stat().st_size
    with open(path, "rb") as fh:
        raw, N, dim, block = _read_header(fh)
        _check_params(N, dim, block, params)
        if size != _HEADER.size + 8 * dim * (dim + 1) + 4:
            raise CorruptCacheError("file size does not match header")
        crc = zlib.crc32(raw)
        ebuf = fh.read(8 * dim)
        crc = zlib.crc32(ebuf, crc)
        energies = np.frombuffer(ebuf, dtype="<f8").astype(float)
        # filled column by column; Fortran order makes each column contiguous
        V = np.empty((dim, dim), dtype=float, order="F")
        flat = V.reshape(-1, order="F")
        step = max(1, _CHUNK_BYTES // 8)
        for start in range(0, dim * dim, step):
            stop = min(start + step, dim * dim)
            mv = memoryview(flat[start:stop]).cast("B")
            n = fh.readinto(mv)
            if n != len(mv):
                raise CorruptCacheError("unexpected end of file")
            crc = zlib.crc32(mv, crc)
        (stored,) = struct.unpack("<I", fh.read(4))
    if stored != crc & 0xFFFFFFFF:
        raise CorruptCacheError("CRC mismatch")
    return Spectrum(energies, V)
