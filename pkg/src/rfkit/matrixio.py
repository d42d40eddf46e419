"""On-disk data matrices: the RFM1 binary format and CSV ingestion."""

import struct

import numpy as np

from .exceptions import DimensionError, ParseError

MAGIC = b"RFM1"
_HEADER = struct.Struct("<IIB")

_DTYPE_REAL = 0
_DTYPE_COMPLEX = 1


def write_matrix(X, path):
    """Write a 2-D matrix as RFM1: magic, u32 rows, u32 cols, u8 dtype, column-major f64 payload.

    Complex matrices are stored as (real, imag) float64 pairs (dtype byte 1).
    """
    X = np.asarray(X)
    if X.ndim != 2:
        raise DimensionError(f"expected a 2-D matrix, got shape {X.shape}")
    if np.iscomplexobj(X):
        code, payload = _DTYPE_COMPLEX, X.astype("<c16")
    else:
        code, payload = _DTYPE_REAL, X.astype("<f8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(_HEADER.pack(X.shape[0], X.shape[1], code))
        fh.write(payload.tobytes(order="F"))


def read_matrix(path):
    """Read an RFM1 file back into a matrix, validating header and payload."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < len(MAGIC) + _HEADER.size:
        raise ParseError(f"{path}: truncated header ({len(blob)} bytes)")
    if blob[: len(MAGIC)] != MAGIC:
        raise ParseError(f"{path}: bad magic {blob[:4]!r}, expected {MAGIC!r}")
    rows, cols, code = _HEADER.unpack_from(blob, len(MAGIC))
    if code not in (_DTYPE_REAL, _DTYPE_COMPLEX):
        raise ParseError(f"{path}: unknown dtype byte {code}")
    dtype = "<f8" if code == _DTYPE_REAL else "<c16"
    expected = rows * cols * np.dtype(dtype).itemsize
    payload = blob[len(MAGIC) + _HEADER.size :]
    if len(payload) != expected:
        raise ParseError(
            f"{path}: payload is {len(payload)} bytes, expected {expected} for {rows}x{cols}"
        )
    flat = np.frombuffer(payload, dtype=dtype)
    X = flat.reshape((rows, cols), order="F")
    bad = np.flatnonzero(~np.isfinite(flat.view(float)))
    if bad.size:
        i = int(bad[0]) // (2 if code == _DTYPE_COMPLEX else 1)
        raise ParseError(f"{path}: non-finite value at row {i % rows}, column {i // rows}")
    return X.copy()


def _parse_csv(path):
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    rows = []
    width = None
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        cells = line.split(",")
        if width is None:
            width = len(cells)
        elif len(cells) != width:
            raise ParseError(
                f"{path}: line {lineno} has {len(cells)} cells, expected {width}"
            )
        row = []
        for colno, cell in enumerate(cells, start=1):
            try:
                value = float(cell)
            except ValueError:
                raise ParseError(
                    f"{path}: line {lineno}, column {colno}: not a number: {cell.strip()!r}"
                )
            if not np.isfinite(value):
                raise ParseError(f"{path}: line {lineno}, column {colno}: non-finite value")
            row.append(value)
        rows.append(row)
    if not rows:
        raise ParseError(f"{path}: empty file")
    return np.array(rows, dtype=float)


def ingest_matrix(path):
    """Load a data matrix from an RFM1 file or a CSV.

    CSV rows are samples; the result is transposed so columns are samples.
    """
    with open(path, "rb") as fh:
        head = fh.read(len(MAGIC))
    if head == MAGIC:
        return read_matrix(path)
    return _parse_csv(path).T
