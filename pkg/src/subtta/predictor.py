"""Semantic projection, zero-shot classification, and per-sample diagnostics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import DegenerateEmbedding, DimensionMismatch
from .subspace import Subspace
from .validation import as_float_array, check_matrix

DEFAULT_TEMPERATURE = 0.01  # logit scale 100, the usual contrastive calibration
_ZERO_NORM = 1e-12


@dataclass(frozen=True)
class TextAnchorSet:
    """C x d unit-norm class-prompt embeddings with their labels."""

    anchors: np.ndarray
    class_names: tuple[str, ...]

    def __post_init__(self):
        a = check_matrix(self.anchors, "anchors")
        if a.shape[0] < 2:
            raise DimensionMismatch("need at least 2 anchors")
        norms = np.linalg.norm(a, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-10):
            raise DegenerateEmbedding("anchor rows must be unit-norm")
        if len(self.class_names) != a.shape[0]:
            raise DimensionMismatch("class_names length must match anchor count")

    @classmethod
    def from_matrix(cls, anchors, class_names=None) -> "TextAnchorSet":
        anchors = as_float_array(anchors, "anchors")
        if class_names is None:
            class_names = tuple(f"class_{i}" for i in range(anchors.shape[0]))
        return cls(anchors=anchors, class_names=tuple(str(c) for c in class_names))

    @property
    def n_classes(self) -> int:
        return self.anchors.shape[0]

    @property
    def dim(self) -> int:
        return self.anchors.shape[1]


@dataclass(frozen=True)
class Prediction:
    class_index: int
    score: float
    probs: np.ndarray
    no_signal: bool = False


@dataclass(frozen=True)
class SampleDiagnostics:
    angle_to_text_subspace: float
    semantic_concentration: float
    gt_similarity: float


def project(v, bt: Subspace) -> np.ndarray:
    """Project embedding(s) onto the textual subspace: ``v @ Bt.T @ Bt``.

    Accepts a single vector or a batch of row vectors; idempotent and
    norm-non-increasing.
    """
    v = as_float_array(v, "embedding")
    if v.shape[-1] != bt.dim:
        raise DimensionMismatch(f"embedding dim {v.shape[-1]} != subspace dim {bt.dim}")
    return (v @ bt.basis.T) @ bt.basis


def _softmax(scores: np.ndarray) -> np.ndarray:
    shifted = scores - np.max(scores)
    e = np.exp(shifted)
    return e / np.sum(e)


def zero_shot(v, anchors: TextAnchorSet, temperature: float = DEFAULT_TEMPERATURE) -> Prediction:
    """Classify one embedding by cosine similarity against the anchors.

    A (near-)zero vector yields a uniform distribution with ``no_signal`` set
    instead of an error, so online streams never halt on one degenerate
    sample. Ties break toward the lower class index.
    """
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    v = as_float_array(v, "embedding").ravel()
    if v.shape[0] != anchors.dim:
        raise DimensionMismatch(f"embedding dim {v.shape[0]} != anchor dim {anchors.dim}")
    norm = np.linalg.norm(v)
    c = anchors.n_classes
    if norm < _ZERO_NORM:
        probs = np.full(c, 1.0 / c)
        return Prediction(class_index=0, score=0.0, probs=probs, no_signal=True)
    scores = anchors.anchors @ (v / norm)
    probs = _softmax(scores / temperature)
    idx = int(np.argmax(scores))  # np.argmax already takes the first maximum
    return Prediction(class_index=idx, score=float(scores[idx]), probs=probs)


def diagnose(v, bt: Subspace, anchors: TextAnchorSet, gt: int) -> SampleDiagnostics:
    """Per-sample geometry: angle to the textual subspace, the fraction of
    embedding energy it retains, and cosine similarity to the ground-truth
    anchor."""
    v = as_float_array(v, "embedding").ravel()
    norm = np.linalg.norm(v)
    if norm < _ZERO_NORM:
        raise DegenerateEmbedding("cannot diagnose a zero embedding")
    if not 0 <= gt < anchors.n_classes:
        raise IndexError(f"gt index {gt} outside [0, {anchors.n_classes})")
    in_span = np.linalg.norm(v @ bt.basis.T)
    concentration = float(np.clip((in_span / norm) ** 2, 0.0, 1.0))
    angle = float(np.arccos(np.sqrt(concentration)))
    gt_sim = float(np.dot(v / norm, anchors.anchors[gt]))
    return SampleDiagnostics(
        angle_to_text_subspace=angle,
        semantic_concentration=concentration,
        gt_similarity=gt_sim,
    )


def predict_after_projection(
    v, bt: Subspace, anchors: TextAnchorSet, temperature: float = DEFAULT_TEMPERATURE
) -> Prediction:
    """Project onto the textual subspace, then classify the purified embedding."""
    return zero_shot(project(v, bt), anchors, temperature)
