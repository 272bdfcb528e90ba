"""TTA objectives applied to purified features: entropy minimization and a
batch between-cluster-scatter surrogate for the inter-class-variance family.

The cluster objective here is a surrogate: maximize the pseudo-label-weighted
spread of class means around the batch mean. It stands in for published
cluster-based losses whose exact form is not reproduced here.
"""

from __future__ import annotations

import warnings

import numpy as np

from .exceptions import SingleClusterWarning
from .validation import check_matrix


def entropy_objective(probs) -> tuple[float, np.ndarray]:
    """Mean Shannon entropy of prediction rows and its gradient w.r.t. the
    pre-softmax logits that produced them.

    Uses natural log with the p log p := 0 convention at p = 0.
    """
    p = check_matrix(probs, "probs")
    if np.any(p < -1e-12) or np.any(np.abs(p.sum(axis=1) - 1.0) > 1e-9):
        raise ValueError("rows must be valid probability vectors")
    b = p.shape[0]
    logp = np.zeros_like(p)
    mask = p > 0
    logp[mask] = np.log(p[mask])
    row_entropy = -np.sum(p * logp, axis=1)
    loss = float(np.mean(row_entropy))
    # dH/dz_k = -p_k (log p_k + H) per row; mean over the batch.
    grad = -p * (logp + row_entropy[:, None]) / b
    return loss, grad


def icv_objective(embeddings, pseudo_labels, n_classes: int) -> tuple[float, np.ndarray]:
    """Negative pseudo-label between-cluster scatter and its gradient.

    loss = -(1/B) * sum_c n_c ||mu_c - mu||^2 over represented classes, where
    mu_c is the mean embedding of pseudo-class c and mu the batch mean. The
    gradient w.r.t. embedding i is ``-(2/B) * (mu_{c_i} - mu)``.
    """
    x = check_matrix(embeddings, "embeddings")
    labels = np.asarray(pseudo_labels, dtype=np.int64)
    b = x.shape[0]
    if labels.shape != (b,):
        raise ValueError(f"need {b} pseudo-labels, got shape {labels.shape}")
    if np.any(labels < 0) or np.any(labels >= n_classes):
        raise ValueError("pseudo-labels outside [0, n_classes)")
    mu = x.mean(axis=0)
    present = np.unique(labels)
    if present.size == 1:
        warnings.warn("all pseudo-labels identical; cluster objective is zero",
                      SingleClusterWarning, stacklevel=2)
        return 0.0, np.zeros_like(x)
    loss = 0.0
    centroid_diff = np.zeros_like(x)
    for c in present:
        idx = labels == c
        mu_c = x[idx].mean(axis=0)
        loss -= idx.sum() * float(np.sum((mu_c - mu) ** 2))
        centroid_diff[idx] = mu_c - mu
    loss /= b
    grad = -(2.0 / b) * centroid_diff
    return loss, grad
