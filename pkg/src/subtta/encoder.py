"""Toy differentiable encoder: frozen linear map, trainable normalization
affine (gamma, beta), and L2-normalized output.

This models only the adaptable tail of a vision backbone: per-row layer-norm
statistics followed by a trainable elementwise affine, then projection onto
the unit sphere. gamma and beta are the sole trainable parameters.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import DimensionMismatch
from .validation import as_float_array, check_matrix

DEGENERATE_NORM = 1e-12


@dataclass
class ParamGradient:
    d_gamma: np.ndarray
    d_beta: np.ndarray

    def __add__(self, other: "ParamGradient") -> "ParamGradient":
        return ParamGradient(self.d_gamma + other.d_gamma, self.d_beta + other.d_beta)


@dataclass
class ForwardResult:
    embeddings: np.ndarray
    degenerate_rows: list = field(default_factory=list)


class ToyEncoder:
    """Frozen m x d linear map + trainable layer-norm affine + L2 output norm."""

    def __init__(self, dim: int, in_dim: int | None = None, w: np.ndarray | None = None,
                 eps_norm: float = 1e-5):
        self.dim = int(dim)
        self.in_dim = int(in_dim) if in_dim is not None else self.dim
        if w is None:
            if self.in_dim != self.dim:
                raise DimensionMismatch("explicit w required when in_dim != dim")
            w = np.eye(self.dim)
        w = as_float_array(w, "w")
        if w.shape != (self.in_dim, self.dim):
            raise DimensionMismatch(f"w must be {self.in_dim} x {self.dim}, got {w.shape}")
        self.w = w
        self.w.setflags(write=False)
        self.eps_norm = float(eps_norm)
        self.gamma = np.ones(self.dim)
        self.beta = np.zeros(self.dim)

    def reset(self) -> None:
        """Restore gamma = 1, beta = 0 exactly (used between stream segments)."""
        self.gamma = np.ones(self.dim)
        self.beta = np.zeros(self.dim)

    def _layernorm(self, z: np.ndarray) -> np.ndarray:
        mu = z.mean(axis=1, keepdims=True)
        var = z.var(axis=1, keepdims=True)
        return (z - mu) / np.sqrt(var + self.eps_norm)

    def forward(self, x) -> ForwardResult:
        """Encode a raw batch into unit-norm embeddings.

        Rows whose pre-normalization output collapses below 1e-12 norm are
        flagged and replaced by the previous valid row (or e1 if none); the
        run continues.
        """
        x = check_matrix(x, "raw batch")
        if x.shape[1] != self.in_dim:
            raise DimensionMismatch(f"raw batch dim {x.shape[1]} != encoder in_dim {self.in_dim}")
        z = x @ self.w
        y = self._layernorm(z)
        a = self.gamma * y + self.beta
        norms = np.linalg.norm(a, axis=1)
        degenerate = [i for i in range(a.shape[0]) if norms[i] < DEGENERATE_NORM]
        out = np.empty_like(a)
        fallback = np.zeros(self.dim)
        fallback[0] = 1.0
        for i in range(a.shape[0]):
            if i in degenerate:
                out[i] = fallback
            else:
                out[i] = a[i] / norms[i]
                fallback = out[i]
        return ForwardResult(embeddings=out, degenerate_rows=degenerate)

    def backward(self, x, upstream) -> ParamGradient:
        """Gradient of an upstream loss on the output embeddings w.r.t. gamma, beta.

        Chains through the L2 normalization (Jacobian (I - v v^T) / ||a||) and
        the affine; layer-norm statistics depend only on the frozen path, so
        they contribute nothing to the parameter gradient. Degenerate rows are
        skipped.
        """
        x = check_matrix(x, "raw batch")
        g = check_matrix(upstream, "upstream gradient")
        if x.shape[0] != g.shape[0] or g.shape[1] != self.dim:
            raise DimensionMismatch(
                f"upstream shape {g.shape} incompatible with batch {x.shape} and dim {self.dim}"
            )
        z = x @ self.w
        y = self._layernorm(z)
        a = self.gamma * y + self.beta
        norms = np.linalg.norm(a, axis=1)
        d_gamma = np.zeros(self.dim)
        d_beta = np.zeros(self.dim)
        for i in range(a.shape[0]):
            if norms[i] < DEGENERATE_NORM:
                continue
            v = a[i] / norms[i]
            g_a = (g[i] - np.dot(g[i], v) * v) / norms[i]
            d_gamma += g_a * y[i]
            d_beta += g_a
        return ParamGradient(d_gamma=d_gamma, d_beta=d_beta)

    def apply_update(self, delta_gamma, delta_beta) -> None:
        """Shift the trainable parameters in place; w is never touched."""
        dg = as_float_array(delta_gamma, "delta_gamma")
        db = as_float_array(delta_beta, "delta_beta")
        if dg.shape != (self.dim,) or db.shape != (self.dim,):
            raise DimensionMismatch("parameter deltas must be length-d vectors")
        self.gamma = self.gamma + dg
        self.beta = self.beta + db
