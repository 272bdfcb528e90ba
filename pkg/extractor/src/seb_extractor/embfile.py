"""Writer (and verification reader) for the SEB1 binary embedding format.

Layout, all integers little-endian:

    magic   4 bytes  b"SEB1"
    version u32      1
    rows    u32
    dim     u32
    dtype   u8       0 = 32-bit float
    payload rows * dim * 4 bytes, row-major little-endian float32
    [optional label block]
    magic   4 bytes  b"LBL1"
    rows    u32      must equal the embedding row count
    labels  rows * u32

This module is deliberately self-contained so the extractor shares no code
with downstream consumers of the format; the byte layout is the contract.
All writes are atomic (same-directory temp file + rename).
"""

from __future__ import annotations

import os
import struct
import tempfile

import numpy as np

MAGIC = b"SEB1"
LABEL_MAGIC = b"LBL1"
VERSION = 1
DTYPE_F32 = 0

_HEADER = struct.Struct("<4sIIIB")
_LABEL_HEADER = struct.Struct("<4sI")


class EmbFileError(Exception):
    """Malformed or inconsistent embedding file content."""


def atomic_write(path, data: bytes) -> None:
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_embeddings(path, matrix, labels=None) -> None:
    """Serialize a row-major float32 embedding matrix, optionally with labels."""
    m = np.ascontiguousarray(np.asarray(matrix, dtype="<f4"))
    if m.ndim != 2 or m.shape[1] == 0:
        raise EmbFileError(f"expected a non-degenerate matrix, got shape {m.shape}")
    rows, dim = m.shape
    parts = [_HEADER.pack(MAGIC, VERSION, rows, dim, DTYPE_F32), m.tobytes()]
    if labels is not None:
        lab = np.asarray(labels, dtype="<u4")
        if lab.shape != (rows,):
            raise EmbFileError(f"need {rows} labels, got shape {lab.shape}")
        parts.append(_LABEL_HEADER.pack(LABEL_MAGIC, rows))
        parts.append(lab.tobytes())
    atomic_write(path, b"".join(parts))


def read_embeddings(path):
    """Decode an embedding file; returns (float64 matrix, labels or None)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _HEADER.size:
        raise EmbFileError("file too short for a header")
    magic, version, rows, dim, dtype = _HEADER.unpack_from(blob, 0)
    if magic != MAGIC:
        raise EmbFileError(f"bad magic {magic!r}")
    if version != VERSION:
        raise EmbFileError(f"unsupported version {version}")
    if dtype != DTYPE_F32:
        raise EmbFileError(f"unsupported dtype code {dtype}")
    offset = _HEADER.size
    if len(blob) < offset + rows * dim * 4:
        raise EmbFileError("payload truncated")
    matrix = np.frombuffer(blob, dtype="<f4", count=rows * dim, offset=offset)
    matrix = matrix.reshape(rows, dim).astype(np.float64)
    offset += rows * dim * 4
    labels = None
    if len(blob) > offset:
        lmagic, lrows = _LABEL_HEADER.unpack_from(blob, offset)
        if lmagic != LABEL_MAGIC or lrows != rows:
            raise EmbFileError("malformed label block")
        offset += _LABEL_HEADER.size
        if len(blob) < offset + rows * 4:
            raise EmbFileError("label block truncated")
        labels = np.frombuffer(blob, dtype="<u4", count=rows, offset=offset).astype(np.int64)
    return matrix, labels
