"""Binary and CSV serialisation of lattice fields.

Binary layout (little endian)::

    magic   4 bytes   b"PHOM"
    version uint32    1
    d       uint32
    N       uint32
    kind    uint32    0 scalar, 1 vector, 2 skew matrix, 3 matrix
    data    float64   component-major, lexicographic site order
"""
from __future__ import annotations

import csv
import itertools
import struct

import numpy as np

from .lattice import MatrixField, ScalarField, SkewMatrixField, TorusGrid, VectorField

MAGIC = b"PHOM"
VERSION = 1
_HEADER = struct.Struct("<4sIIII")
_KINDS = {ScalarField: 0, VectorField: 1, SkewMatrixField: 2, MatrixField: 3}
_CLASSES = {v: k for k, v in _KINDS.items()}


class FieldFormatError(ValueError):
    pass


def dumps(f) -> bytes:
    kind = _KINDS[type(f)]
    header = _HEADER.pack(MAGIC, VERSION, f.grid.d, f.grid.N, kind)
    return header + np.ascontiguousarray(f.values, dtype="<f8").tobytes()


def loads(data: bytes):
    if len(data) < _HEADER.size:
        raise FieldFormatError("truncated header")
    magic, version, d, N, kind = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FieldFormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise FieldFormatError(f"unsupported format version {version}")
    if kind not in _CLASSES:
        raise FieldFormatError(f"unknown field kind tag {kind}")
    grid = TorusGrid(d, N)
    ncomp = (1, d, d * d, d * d)[kind]
    body = np.frombuffer(data, dtype="<f8", offset=_HEADER.size)
    if body.size != ncomp * grid.size:
        raise FieldFormatError(f"expected {ncomp * grid.size} values, found {body.size}")
    lead = ((), (d,), (d, d), (d, d))[kind]
    return _CLASSES[kind](grid, body.reshape(lead + grid.shape).astype(float))


def save(path, f):
    with open(path, "wb") as fh:
        fh.write(dumps(f))


def load(path):
    with open(path, "rb") as fh:
        return loads(fh.read())


def to_csv(path, f):
    """Debug dump: one row per site, coordinates then components."""
    d = f.grid.d
    comps = f.values.reshape(-1, f.grid.size)
    if isinstance(f, ScalarField):
        names = ["value"]
    elif isinstance(f, VectorField):
        names = [f"v{i + 1}" for i in range(d)]
    else:
        names = [f"m{i + 1}{j + 1}" for i in range(d) for j in range(d)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{i + 1}" for i in range(d)] + names)
        for flat, x in enumerate(itertools.product(range(f.grid.N), repeat=d)):
            w.writerow(list(x) + [repr(float(c)) for c in comps[:, flat]])
