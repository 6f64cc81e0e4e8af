"""
Binary field snapshots.

Layout (little-endian throughout)::

    b"NLPF1"                      5-byte magic
    u32 m, u32 n
    f64 x0, y0, L1, L2
    f64 t
    m*n f64 values, x-index fastest
"""

from __future__ import annotations

import struct

import numpy as np

from nlpf.grid import Field, GridSpec

MAGIC = b"NLPF1"
_HEADER = struct.Struct("<5sII5d")


class SnapshotFormatError(ValueError):
    pass


def to_bytes(field: Field) -> bytes:
    g = field.grid
    head = _HEADER.pack(MAGIC, g.m, g.n, g.x0, g.y0, g.L1, g.L2, float(field.t))
    body = np.asarray(field.values, dtype="<f8").tobytes(order="F")
    return head + body


def from_bytes(data: bytes) -> Field:
    if len(data) < _HEADER.size:
        raise SnapshotFormatError(f"snapshot too short for header ({len(data)} < {_HEADER.size} bytes)")
    magic, m, n, x0, y0, L1, L2, t = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise SnapshotFormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    expected = _HEADER.size + 8 * m * n
    if len(data) != expected:
        raise SnapshotFormatError(f"snapshot for {m}x{n} grid needs {expected} bytes, found {len(data)}")
    values = np.frombuffer(data, dtype="<f8", offset=_HEADER.size).reshape((m, n), order="F")
    return Field(GridSpec(L1, L2, m, n, x0, y0), values.astype(np.float64), "state", t)


def write_snapshot(path, field: Field) -> None:
    with open(path, "wb") as fh:
        fh.write(to_bytes(field))


def read_snapshot(path) -> Field:
    with open(path, "rb") as fh:
        return from_bytes(fh.read())
