"""Tensor container format: round trips, appended blocks, corruption errors."""

import io
import struct

import numpy as np
import pytest

from imly.container import (
    FORMAT_VERSION,
    MAGIC,
    load_tensors,
    read_tensors,
    save_tensors,
    write_tensors,
)
from imly.errors import DataError


def test_round_trip_preserves_names_shapes_and_values(tmp_path):
    tensors = {
        "weights": np.arange(12, dtype=np.float64).reshape(3, 4),
        "bias": np.array([1.5, -2.25]),
        "cube": np.ones((2, 3, 2)) * 0.125,
        "empty": np.zeros((0, 5)),
    }
    path = tmp_path / "model.imly"
    save_tensors(str(path), tensors)
    loaded = load_tensors(str(path))
    assert list(loaded) == list(tensors)  # insertion order kept
    for name, array in tensors.items():
        assert loaded[name].shape == array.shape
        assert loaded[name].dtype == np.float32
        np.testing.assert_array_equal(loaded[name], array.astype(np.float32))


def test_values_are_stored_as_float32(tmp_path):
    path = tmp_path / "f32.imly"
    exact = np.array([1.0 + 1e-12])  # not representable in float32
    save_tensors(str(path), {"x": exact})
    loaded = load_tensors(str(path))
    assert loaded["x"][0] == np.float32(exact[0])


def test_non_ascii_tensor_names_round_trip(tmp_path):
    path = tmp_path / "name.imly"
    save_tensors(str(path), {"période": np.array([3.0])})
    assert "période" in load_tensors(str(path))


def test_reader_stops_after_tensor_section_for_appended_blocks():
    fp = io.BytesIO()
    write_tensors(fp, {"a": np.array([1.0, 2.0])})
    fp.write(b"TRAILING-BLOCK")
    fp.seek(0)
    tensors = read_tensors(fp)
    np.testing.assert_array_equal(tensors["a"], [1.0, 2.0])
    assert fp.read() == b"TRAILING-BLOCK"


def test_bad_magic_rejected():
    fp = io.BytesIO(b"NOPE" + struct.pack("<II", FORMAT_VERSION, 0))
    with pytest.raises(DataError, match="magic"):
        read_tensors(fp)


def test_unsupported_version_rejected():
    fp = io.BytesIO(MAGIC + struct.pack("<II", FORMAT_VERSION + 1, 0))
    with pytest.raises(DataError, match="version"):
        read_tensors(fp)


def test_truncated_header_rejected():
    with pytest.raises(DataError, match="truncated"):
        read_tensors(io.BytesIO(MAGIC + b"\x01\x00"))


def test_truncated_tensor_data_rejected():
    fp = io.BytesIO()
    write_tensors(fp, {"a": np.arange(16, dtype=np.float64)})
    payload = fp.getvalue()[:-8]  # chop half the data section
    with pytest.raises(DataError, match="truncated"):
        read_tensors(io.BytesIO(payload))


def test_empty_container_round_trips():
    fp = io.BytesIO()
    write_tensors(fp, {})
    fp.seek(0)
    assert read_tensors(fp) == {}
