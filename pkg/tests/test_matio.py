import struct

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from shiftpod.matio import MatrixFormatError, format_for, read_matrix, write_matrix

matrices = arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 6)),
                  elements=st.floats(allow_nan=False, allow_infinity=False, width=64))


@given(matrices)
def test_roundtrip_binary_bitwise(tmp_path_factory, a):
    path = tmp_path_factory.mktemp("m") / "a.bin"
    write_matrix(path, a)
    np.testing.assert_array_equal(read_matrix(path), a)


@given(matrices)
def test_roundtrip_csv_exact(tmp_path_factory, a):
    path = tmp_path_factory.mktemp("m") / "a.csv"
    write_matrix(path, a)
    np.testing.assert_array_equal(read_matrix(path), a)


def test_binary_layout(tmp_path):
    path = write_matrix(tmp_path / "x.bin", np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]))
    raw = path.read_bytes()
    assert raw[:4] == b"SPOD"
    assert struct.unpack("<III", raw[4:16]) == (2, 3, 0)
    np.testing.assert_array_equal(np.frombuffer(raw[16:], "<f8"), [1, 2, 3, 4, 5, 6])


def test_bad_files(tmp_path):
    (tmp_path / "short.bin").write_bytes(b"SP")
    with pytest.raises(MatrixFormatError, match="truncated"):
        read_matrix(tmp_path / "short.bin")
    (tmp_path / "magic.bin").write_bytes(b"NOPE" + bytes(12))
    with pytest.raises(MatrixFormatError, match="magic"):
        read_matrix(tmp_path / "magic.bin")
    (tmp_path / "size.bin").write_bytes(struct.pack("<4sIII", b"SPOD", 2, 2, 0) + bytes(8))
    with pytest.raises(MatrixFormatError, match="expected"):
        read_matrix(tmp_path / "size.bin")
    (tmp_path / "bad.csv").write_text("1,2\n3,x\n")
    with pytest.raises(MatrixFormatError):
        read_matrix(tmp_path / "bad.csv")
    with pytest.raises(MatrixFormatError):
        format_for("a.txt")
    with pytest.raises(MatrixFormatError):
        write_matrix(tmp_path / "c.bin", np.zeros((2, 2, 2)))
