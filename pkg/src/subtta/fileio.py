"""Binary embedding-file format, flat config echo, and per-step CSV output.

Embedding file layout (all integers little-endian):

    magic   4 bytes  b"SEB1"
    version u32
    rows    u32
    dim     u32
    dtype   u8       0 = 32-bit float
    payload rows * dim * 4 bytes, row-major little-endian float32
    [optional label block]
    magic   4 bytes  b"LBL1"
    rows    u32      must equal the embedding row count
    labels  rows * u32

All writes go through a temp file + rename so an interrupted run never leaves
a half-valid file behind.
"""

from __future__ import annotations

import os
import struct
import tempfile
import warnings

import numpy as np

from .exceptions import FormatError, TruncationError, UnsupportedDtype

MAGIC = b"SEB1"
LABEL_MAGIC = b"LBL1"
VERSION = 1
DTYPE_F32 = 0

_HEADER = struct.Struct("<4sIIIB")
_LABEL_HEADER = struct.Struct("<4sI")


def atomic_write(path, data: bytes) -> None:
    """Write bytes to ``path`` via a same-directory temp file and rename."""
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
    if m.ndim != 2:
        raise FormatError(f"expected a matrix, got shape {m.shape}")
    rows, dim = m.shape
    if dim == 0:
        raise FormatError("dim must be positive")
    parts = [_HEADER.pack(MAGIC, VERSION, rows, dim, DTYPE_F32), m.tobytes()]
    if labels is not None:
        lab = np.asarray(labels, dtype="<u4")
        if lab.shape != (rows,):
            raise FormatError(f"need {rows} labels, got shape {lab.shape}")
        parts.append(_LABEL_HEADER.pack(LABEL_MAGIC, rows))
        parts.append(lab.tobytes())
    atomic_write(path, b"".join(parts))


def read_embeddings(path) -> tuple[np.ndarray, np.ndarray | None]:
    """Decode an embedding file into a float64 matrix (+ labels if present).

    Rows whose norm deviates from 1 by more than 1e-3 are re-normalized and a
    warning is emitted; all other rows decode bit-exactly.
    """
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _HEADER.size:
        raise FormatError("file too short for a header")
    magic, version, rows, dim, dtype = _HEADER.unpack_from(blob, 0)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise FormatError(f"unsupported version {version}")
    if dtype != DTYPE_F32:
        raise UnsupportedDtype(f"dtype code {dtype} not supported")
    if dim == 0:
        raise FormatError("dim must be positive")
    payload_len = rows * dim * 4
    offset = _HEADER.size
    if len(blob) < offset + payload_len:
        raise TruncationError(
            f"payload truncated: expected {offset + payload_len} bytes, have {len(blob)}"
        )
    matrix = np.frombuffer(blob, dtype="<f4", count=rows * dim, offset=offset)
    matrix = matrix.reshape(rows, dim).astype(np.float64)
    offset += payload_len

    labels = None
    if len(blob) > offset:
        if len(blob) < offset + _LABEL_HEADER.size:
            raise TruncationError("trailing bytes too short for a label block")
        lmagic, lrows = _LABEL_HEADER.unpack_from(blob, offset)
        if lmagic != LABEL_MAGIC:
            raise FormatError(f"bad label magic {lmagic!r}")
        if lrows != rows:
            raise FormatError(f"label count {lrows} != row count {rows}")
        offset += _LABEL_HEADER.size
        if len(blob) < offset + rows * 4:
            raise TruncationError(
                f"label block truncated: expected {offset + rows * 4} bytes, have {len(blob)}"
            )
        labels = np.frombuffer(blob, dtype="<u4", count=rows, offset=offset).astype(np.int64)

    if rows:
        norms = np.linalg.norm(matrix, axis=1)
        off = np.abs(norms - 1.0) > 1e-3
        if np.any(off):
            warnings.warn(
                f"{int(np.sum(off))} rows deviated from unit norm by >1e-3; re-normalized",
                UserWarning, stacklevel=2,
            )
            nonzero = off & (norms > 0)
            matrix[nonzero] /= norms[nonzero][:, None]
    return matrix, labels


def fmt9(x) -> str:
    """Format a number to 9 significant digits (deterministic CSV cells)."""
    return f"{float(x):.9g}"


STEP_CSV_COLUMNS = (
    "step", "align_loss_before", "align_loss_after", "tta_loss",
    "accuracy", "mean_concentration", "max_principal_angle_deg",
)


def write_step_csv(reports, path) -> None:
    """One row per adaptation step, 9-significant-digit formatting throughout."""
    lines = [",".join(STEP_CSV_COLUMNS)]
    for rep in reports:
        lines.append(",".join([
            str(rep.step),
            fmt9(rep.align_loss_before),
            fmt9(rep.align_loss_after),
            fmt9(rep.tta_loss),
            fmt9(rep.accuracy),
            fmt9(rep.mean_concentration),
            fmt9(rep.max_principal_angle_deg),
        ]))
    atomic_write(path, ("\n".join(lines) + "\n").encode("ascii"))


def write_config(config: dict, path) -> None:
    """Echo a flat key=value config file, keys sorted for byte determinism."""
    lines = [f"{k}={config[k]}" for k in sorted(config)]
    atomic_write(path, ("\n".join(lines) + "\n").encode("utf-8"))


def read_config(path) -> dict:
    out = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            if "=" not in line:
                raise FormatError(f"malformed config line: {line!r}")
            key, value = line.split("=", 1)
            out[key] = value
    return out
