"""Matrix files: decimal CSV for inspection and a raw little-endian binary format.

Binary layout: 16-byte header (``b"SPOD"``, u32 rows, u32 cols, u32
reserved = 0, all little-endian) followed by the entries in row-major
order as little-endian float64.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

__all__ = ["MatrixFormatError", "write_matrix", "read_matrix", "format_for"]

MAGIC = b"SPOD"
_HEADER = struct.Struct("<4sIII")


class MatrixFormatError(ValueError):
    pass


def format_for(path) -> str:
    suffix = Path(path).suffix.lower()
    if suffix == ".csv":
        return "csv"
    if suffix in (".bin", ".spod"):
        return "bin"
    raise MatrixFormatError(f"cannot tell the matrix format of {path!s} (use .csv or .bin)")


def write_matrix(path, a, fmt: str | None = None) -> Path:
    """Write a 2-D array; ``fmt`` defaults to the one implied by the suffix."""
    path = Path(path)
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 1:
        a = a[None, :]
    if a.ndim != 2:
        raise MatrixFormatError("only matrices can be written")
    fmt = fmt or format_for(path)
    if fmt == "csv":
        np.savetxt(path, a, fmt="%.17g", delimiter=",")
    elif fmt == "bin":
        rows, cols = a.shape
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(MAGIC, rows, cols, 0))
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())
    else:
        raise MatrixFormatError(f"unknown matrix format {fmt!r}")
    return path


def read_matrix(path, fmt: str | None = None) -> np.ndarray:
    path = Path(path)
    fmt = fmt or format_for(path)
    if fmt == "csv":
        try:
            a = np.loadtxt(path, delimiter=",", ndmin=2, dtype=np.float64)
        except ValueError as exc:
            raise MatrixFormatError(f"{path}: {exc}") from None
        return a
    if fmt != "bin":
        raise MatrixFormatError(f"unknown matrix format {fmt!r}")
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise MatrixFormatError(f"{path}: truncated header")
    magic, rows, cols, _ = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise MatrixFormatError(f"{path}: bad magic {magic!r}")
    expected = _HEADER.size + 8 * rows * cols
    if len(raw) != expected:
        raise MatrixFormatError(f"{path}: expected {expected} bytes for {rows}x{cols}, found {len(raw)}")
    return np.frombuffer(raw, dtype="<f8", offset=_HEADER.size).reshape(rows, cols).astype(np.float64)
