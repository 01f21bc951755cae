import numpy as np
import pytest

from structstyle import container
from structstyle.errors import ContainerError, DigestMismatchError


def test_round_trip_bit_exact(tmp_path):
    arrays = {"a": np.random.default_rng(0).normal(size=(3, 4)).astype(np.float32),
              "b": np.arange(5, dtype=np.float64), "c": np.array([1, 2], dtype=np.int64)}
    digest = container.write(tmp_path / "x.bin", "thing", arrays, {"note": "hi"})
    c = container.read(tmp_path / "x.bin", expected_kind="thing")
    assert c.digest == digest and c.meta == {"note": "hi"}
    for k, v in arrays.items():
        assert c.arrays[k].dtype == v.dtype
        assert c.arrays[k].tobytes() == v.tobytes()


def test_payload_is_little_endian_float32(tmp_path):
    container.write(tmp_path / "x.bin", "thing", {"a": np.array([1.0, -2.5], dtype=np.float32)})
    blob = (tmp_path / "x.bin").read_bytes()
    assert blob.endswith(np.array([1.0, -2.5], dtype="<f4").tobytes())


def test_corruption_detected(tmp_path):
    p = tmp_path / "x.bin"
    container.write(p, "thing", {"a": np.ones(16, dtype=np.float32)})
    blob = bytearray(p.read_bytes())
    blob[-3] ^= 0xFF
    p.write_bytes(bytes(blob))
    with pytest.raises(DigestMismatchError):
        container.read(p)


def test_truncation_names_array(tmp_path):
    p = tmp_path / "x.bin"
    container.write(p, "thing", {"first": np.ones(4, np.float32), "second": np.ones(8, np.float32)})
    p.write_bytes(p.read_bytes()[:-10])
    with pytest.raises(ContainerError, match="second"):
        container.read(p)


def test_wrong_kind_and_bad_magic(tmp_path):
    p = tmp_path / "x.bin"
    container.write(p, "thing", {"a": np.ones(1, np.float32)})
    with pytest.raises(ContainerError, match="expected"):
        container.read(p, expected_kind="other")
    (tmp_path / "y.bin").write_bytes(b"not a container at all")
    with pytest.raises(ContainerError, match="magic"):
        container.read(tmp_path / "y.bin")


def test_version_mismatch(tmp_path):
    p = tmp_path / "x.bin"
    container.write(p, "thing", {"a": np.ones(1, np.float32)})
    blob = bytearray(p.read_bytes())
    blob[8] = 99
    p.write_bytes(bytes(blob))
    with pytest.raises(ContainerError, match="version"):
        container.read(p)
