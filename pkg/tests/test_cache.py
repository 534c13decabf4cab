import struct
import zlib

import numpy as np
import pytest

from memtherm.cache import (
    CacheVersionError, CorruptCacheError, ParameterMismatchError, read_cache, verify_cache,
    write_cache,
)
from memtherm.model import ModelParams

from conftest import small_system


@pytest.fixture
def cached(tmp_path):
    m, s, _ = small_system(4)
    path = write_cache(tmp_path / "n4.mbth", m.params, s)
    return path, m, s


def test_roundtrip(cached):
    path, m, s = cached
    back = read_cache(path, m.params)
    np.testing.assert_array_equal(back.energies, s.energies)
    np.testing.assert_array_equal(back.vectors, s.vectors)
    info = verify_cache(path)
    assert info["N"] == 4 and info["dim"] == 140


def test_layout(cached):
    path, m, s = cached
    raw = path.read_bytes()
    assert raw[:4] == b"MBTH"
    version, N, dim = struct.unpack_from("<IIQ", raw, 4)
    assert (version, N, dim) == (1, 4, 140)
    block = struct.unpack_from("<8d", raw, 20)
    assert block[:6] == (2.0, 0.5, 1 / np.sqrt(8), 2.0, 2.0, 4.0)
    assert struct.unpack("<I", raw[-4:])[0] == zlib.crc32(raw[:-4])
    # column-major: the first dim doubles after the energies are column 0
    off = 84 + 8 * dim
    col0 = np.frombuffer(raw[off:off + 8 * dim], dtype="<f8")
    np.testing.assert_array_equal(col0, s.vectors[:, 0])


def test_truncated(cached):
    path, *_ = cached
    path.write_bytes(path.read_bytes()[:-100])
    with pytest.raises(CorruptCacheError):
        verify_cache(path)
    with pytest.raises(CorruptCacheError):
        read_cache(path)
    path.write_bytes(b"MBTH")
    with pytest.raises(CorruptCacheError):
        verify_cache(path)


def test_bit_flip_detected(cached, rng):
    path, *_ = cached
    raw = bytearray(path.read_bytes())
    pos = int(rng.integers(84, len(raw) - 4))
    raw[pos] ^= 1 << int(rng.integers(0, 8))
    path.write_bytes(bytes(raw))
    with pytest.raises(CorruptCacheError, match="CRC"):
        verify_cache(path)
    with pytest.raises(CorruptCacheError, match="CRC"):
        read_cache(path)


def test_wrong_size_rejected(cached):
    path, *_ = cached
    with pytest.raises(ParameterMismatchError):
        verify_cache(path, ModelParams.from_size(5))
    with pytest.raises(ParameterMismatchError):
        read_cache(path, ModelParams.from_size(3))


def test_version_and_magic(cached):
    path, *_ = cached
    raw = bytearray(path.read_bytes())
    raw[4:8] = struct.pack("<I", 99)
    path.write_bytes(bytes(raw))
    with pytest.raises(CacheVersionError):
        verify_cache(path)
    raw[0:4] = b"XXXX"
    path.write_bytes(bytes(raw))
    with pytest.raises(CorruptCacheError, match="magic"):
        verify_cache(path)


def test_error_kinds_are_distinct():
    kinds = {CorruptCacheError, CacheVersionError, ParameterMismatchError}
    for k in kinds:
        assert not any(issubclass(k, o) for o in kinds - {k})
