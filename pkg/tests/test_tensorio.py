import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import array_shapes, arrays

from fdfm.errors import FormatError
from fdfm.tensorio import MAGIC, read_tensor, write_tensor


def test_header_layout(tmp_path):
    path = tmp_path / "t.fpxt"
    write_tensor(path, np.arange(6.0).reshape(2, 3))
    raw = path.read_bytes()
    assert raw[:5] == MAGIC
    assert raw[5] == 2  # rank
    assert int.from_bytes(raw[6:10], "little") == 2
    assert int.from_bytes(raw[10:14], "little") == 3
    assert len(raw) == 14 + 6 * 8


@settings(max_examples=60, deadline=None)
@given(
    arrays(
        np.float64,
        array_shapes(min_dims=0, max_dims=4, min_side=0, max_side=5),
        elements=st.floats(allow_nan=False, allow_infinity=False, width=64),
    )
)
def test_roundtrip(tmp_path_factory, arr):
    path = tmp_path_factory.mktemp("fpxt") / "x.fpxt"
    write_tensor(path, arr)
    back = read_tensor(path)
    assert back.shape == arr.shape
    assert np.array_equal(back, arr)


def test_zero_length_leading_dim(tmp_path):
    path = tmp_path / "empty.fpxt"
    write_tensor(path, np.zeros((0, 1, 4, 4)))
    back = read_tensor(path)
    assert back.shape == (0, 1, 4, 4)


def test_bad_magic(tmp_path):
    path = tmp_path / "bad.fpxt"
    path.write_bytes(b"NOPE!" + b"\x00" * 16)
    with pytest.raises(FormatError):
        read_tensor(path)


def test_truncated_payload(tmp_path):
    path = tmp_path / "trunc.fpxt"
    write_tensor(path, np.ones((3, 3)))
    raw = path.read_bytes()
    path.write_bytes(raw[:-4])
    with pytest.raises(FormatError):
        read_tensor(path)


def test_truncated_dims(tmp_path):
    path = tmp_path / "trunc2.fpxt"
    path.write_bytes(MAGIC + bytes([4]) + b"\x01\x00\x00\x00")
    with pytest.raises(FormatError):
        read_tensor(path)
