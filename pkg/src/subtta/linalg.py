"""Dense symmetric eigendecomposition, small SVD, and principal angles.

Backed by LAPACK through numpy; results are deterministic for identical input
on a given platform. Eigenvector signs are fixed so the largest-magnitude
component of each vector is positive (ties broken by lowest index), which keeps
downstream tests reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import DimensionMismatch, InvalidMatrix, NoConvergence
from .validation import as_float_array, check_symmetric


@dataclass(frozen=True)
class EigenPairs:
    """Full spectrum of a symmetric matrix, eigenvalues descending.

    ``vectors`` holds orthonormal eigenvectors as columns, ``vectors[:, i]``
    pairing with ``values[i]``.
    """

    values: np.ndarray
    vectors: np.ndarray


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    """Flip column signs so each column's largest-|.| entry is positive."""
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def sym_eig(m) -> EigenPairs:
    """Eigendecompose a symmetric matrix; full spectrum, descending order."""
    arr = check_symmetric(m, "sym_eig input")
    arr = 0.5 * (arr + arr.T)
    try:
        values, vectors = np.linalg.eigh(arr)
    except np.linalg.LinAlgError as exc:
        raise NoConvergence(f"eigendecomposition failed: {exc}") from exc
    order = np.argsort(values)[::-1]
    values = values[order]
    vectors = _fix_signs(vectors[:, order])
    return EigenPairs(values=values, vectors=vectors)


def svd_small(m) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """SVD of a small dense matrix: returns (U, S, V) with m = U @ diag(S) @ V.T."""
    arr = as_float_array(m, "svd_small input")
    if arr.ndim != 2:
        raise InvalidMatrix(f"svd_small expects a matrix, got shape {arr.shape}")
    if max(arr.shape) > 512:
        raise InvalidMatrix("svd_small is limited to matrices of side <= 512")
    try:
        u, s, vt = np.linalg.svd(arr, full_matrices=True)
    except np.linalg.LinAlgError as exc:
        raise NoConvergence(f"SVD failed: {exc}") from exc
    return u, s, vt.T


def principal_angles(a, b) -> np.ndarray:
    """Principal angles between the row-spans of two r x d orthonormal bases.

    Returns angles in radians, ascending, each in [0, pi/2]. Cosines are the
    singular values of ``a @ b.T`` clamped to [0, 1] before arccos.
    """
    a = as_float_array(a, "basis a")
    b = as_float_array(b, "basis b")
    if a.shape != b.shape:
        raise DimensionMismatch(f"bases have shapes {a.shape} vs {b.shape}")
    product = a @ b.T
    _, sigma, _ = svd_small(product)
    sigma = np.clip(sigma, 0.0, 1.0)
    angles = np.arccos(sigma)
    return np.sort(angles)
