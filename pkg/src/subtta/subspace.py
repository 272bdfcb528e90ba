"""Streaming covariance tracking, principal subspace extraction, and the
chordal alignment loss with its analytic gradient.

The alignment loss between two rank-r subspaces with orthonormal bases
Bt, Bv (rows) is ``r - ||Bt @ Bv.T||_F**2``, the squared chordal distance on
the Grassmannian. Its gradient with respect to the current embedding batch is
computed through the spectral projector of the tracked visual covariance; only
the current-batch term of the EMA carries gradient (the accumulated history is
treated as a constant).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np

from .exceptions import (
    DegenerateAnchors,
    DegenerateGapWarning,
    DimensionMismatch,
    InvalidRotation,
    NumericalBlowup,
    RankTooLarge,
)
from .linalg import EigenPairs, principal_angles, sym_eig
from .validation import as_float_array, check_matrix, check_symmetric

# Projector-derivative terms with eigenvalue separation below this are dropped
# (conservative subgradient at degenerate spectra).
EPS_GAP = 1e-8


@dataclass(frozen=True)
class CovarianceTracker:
    """Running d x d covariance with momentum ``alpha``."""

    sigma: np.ndarray
    alpha: float
    initialized_from: str = "TextPrior"

    def __post_init__(self):
        check_symmetric(self.sigma, "tracker sigma")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")

    @property
    def dim(self) -> int:
        return self.sigma.shape[0]


@dataclass(frozen=True)
class Subspace:
    """Rank-r principal subspace: r x d row-orthonormal basis + eigenvalues."""

    basis: np.ndarray
    eigenvalues: np.ndarray
    rank: int
    degenerate_gap: bool = False

    @property
    def dim(self) -> int:
        return self.basis.shape[1]


@dataclass(frozen=True)
class AlignmentGradient:
    """Gradient of the alignment loss w.r.t. the current embedding batch."""

    d_loss_d_batch: np.ndarray
    loss_value: float
    dropped_terms: int = 0


def text_covariance(anchors) -> np.ndarray:
    """Covariance of the anchor set: ``T.T @ T`` for unit-norm anchor rows."""
    t = check_matrix(anchors, "anchors")
    norms = np.linalg.norm(t, axis=1)
    if np.any(norms < 1e-12):
        raise DegenerateAnchors("anchor set contains zero rows")
    sigma = t.T @ t
    return 0.5 * (sigma + sigma.T)


def ema_update(tracker: CovarianceTracker, batch) -> CovarianceTracker:
    """One EMA step: ``sigma <- (1 - alpha) * sigma + alpha * V.T @ V``.

    The result is re-symmetrized to suppress floating-point drift.
    """
    v = check_matrix(batch, "batch")
    if v.shape[1] != tracker.dim:
        raise DimensionMismatch(
            f"batch dim {v.shape[1]} does not match tracker dim {tracker.dim}"
        )
    a = tracker.alpha
    sigma = (1.0 - a) * tracker.sigma + a * (v.T @ v)
    sigma = 0.5 * (sigma + sigma.T)
    return replace(tracker, sigma=sigma)


def extract_subspace(sigma, r: int, eig: EigenPairs | None = None) -> Subspace:
    """Top-r principal subspace of a symmetric matrix.

    Pass ``eig`` to reuse an existing decomposition of ``sigma``. A near-zero
    eigengap at the cut (lambda_r - lambda_{r+1} < EPS_GAP) is flagged on the
    result and raised as a :class:`DegenerateGapWarning`, not an error.
    """
    sigma = check_symmetric(sigma, "sigma")
    d = sigma.shape[0]
    if r < 1 or r > d:
        raise RankTooLarge(f"rank {r} outside [1, {d}]")
    if eig is None:
        eig = sym_eig(sigma)
    basis = eig.vectors[:, :r].T
    eigenvalues = eig.values[:r].copy()
    degenerate = False
    if r < d and eig.values[r - 1] - eig.values[r] < EPS_GAP:
        degenerate = True
        warnings.warn(
            f"eigengap at rank {r} is below {EPS_GAP:g}; subspace is ill-conditioned",
            DegenerateGapWarning,
            stacklevel=2,
        )
    return Subspace(basis=basis, eigenvalues=eigenvalues, rank=r, degenerate_gap=degenerate)


def chordal_loss(bt: Subspace, bv: Subspace) -> float:
    """Squared chordal distance ``r - ||Bt @ Bv.T||_F**2``; lies in [0, r]."""
    if bt.rank != bv.rank or bt.dim != bv.dim:
        raise DimensionMismatch(
            f"subspaces have (rank, dim) ({bt.rank}, {bt.dim}) vs ({bv.rank}, {bv.dim})"
        )
    overlap = bt.basis @ bv.basis.T
    loss = bt.rank - float(np.sum(overlap * overlap))
    # Exact value is in [0, r]; clip rounding spill only.
    return float(min(max(loss, 0.0), bt.rank))


def chordal_loss_grad(
    bt: Subspace,
    eig_v: EigenPairs,
    batch,
    alpha: float,
    r: int,
) -> AlignmentGradient:
    """Gradient of the alignment loss w.r.t. the current batch rows.

    ``eig_v`` must be the full spectrum of the post-update visual covariance
    and ``batch`` the batch used in that EMA step. With A = Bt.T @ Bt and
    eigenpairs (lambda_i, u_i) of the visual covariance, the derivative of the
    loss w.r.t. the covariance is

        dL/dSigma = - sum_{i<=r, j>r} 2 (u_i.T A u_j) / (lambda_i - lambda_j)
                      * (u_i u_j.T + u_j u_i.T) / 2,

    with terms dropped where |lambda_i - lambda_j| < EPS_GAP; the batch then
    receives ``dL/dV = 2 * alpha * V @ dL/dSigma`` (history carries no
    gradient).
    """
    v = check_matrix(batch, "batch")
    d = v.shape[1]
    u = eig_v.vectors
    lam = eig_v.values
    if u.shape[0] != d or bt.dim != d:
        raise DimensionMismatch("batch, spectrum, and textual basis dims disagree")
    if r < 1 or r > d:
        raise RankTooLarge(f"rank {r} outside [1, {d}]")

    bv = Subspace(basis=u[:, :r].T, eigenvalues=lam[:r], rank=r)
    loss = chordal_loss(bt, bv)
    if r == d:
        # Full-rank projector is the identity; the loss is constant.
        return AlignmentGradient(d_loss_d_batch=np.zeros_like(v), loss_value=loss)

    # M[i, j] = u_i.T A u_j computed as (Bt @ u).T @ (Bt @ u).
    btu = bt.basis @ u
    m = btu.T @ btu
    gaps = lam[:r, None] - lam[None, r:]
    safe = np.abs(gaps) >= EPS_GAP
    coeff = np.zeros_like(gaps)
    coeff[safe] = -m[:r, r:][safe] / gaps[safe]
    dropped = int(np.sum(~safe))

    k = np.zeros((d, d))
    k[:r, r:] = coeff
    k[r:, :r] = coeff.T
    d_sigma = u @ k @ u.T
    grad = 2.0 * alpha * v @ d_sigma
    if not np.all(np.isfinite(grad)):
        raise NumericalBlowup("alignment gradient is non-finite")
    return AlignmentGradient(d_loss_d_batch=grad, loss_value=loss, dropped_terms=dropped)


def basis_invariance_check(bt: Subspace, bv: Subspace, q) -> float:
    """Loss drift under an orthogonal re-parameterization of ``bv``.

    Returns ``|L(bt, q @ bv) - L(bt, bv)|``; the loss depends only on the
    spans, so this should vanish (<= 1e-9) for any orthogonal q.
    """
    q = as_float_array(q, "q")
    if q.ndim != 2 or q.shape[0] != q.shape[1]:
        raise InvalidRotation(f"q must be square, got shape {q.shape}")
    if np.linalg.norm(q.T @ q - np.eye(q.shape[0])) > 1e-10:
        raise InvalidRotation("q is not orthogonal")
    if q.shape[0] != bv.rank:
        raise DimensionMismatch(f"q side {q.shape[0]} does not match rank {bv.rank}")
    rotated = Subspace(basis=q @ bv.basis, eigenvalues=bv.eigenvalues, rank=bv.rank)
    return abs(chordal_loss(bt, rotated) - chordal_loss(bt, bv))


def subspace_angles(bt: Subspace, bv: Subspace) -> np.ndarray:
    """Principal angles between two tracked subspaces (radians, ascending)."""
    return principal_angles(bt.basis, bv.basis)
