"""Image/text encoders behind a common two-method interface.

``StubEncoder`` is a deterministic checkpoint-free fallback: images are
downsampled to a fixed grid and pushed through a seeded random projection,
texts through a character-trigram hash into the same projection space. It
produces well-formed unit-norm embeddings for format and pipeline testing
without model downloads.

``ClipEncoder`` wraps a sentence-transformers CLIP checkpoint when one is
installed and available locally.
"""

from __future__ import annotations

import hashlib

import numpy as np
from PIL import Image

_GRID = 16  # stub downsample resolution


class StubEncoder:
    """Deterministic projection encoder; no checkpoint required."""

    name = "stub"

    def __init__(self, dim: int = 64, seed: int = 0):
        self.dim = int(dim)
        rng = np.random.default_rng(seed)
        self._img_proj = rng.normal(size=(_GRID * _GRID, self.dim)) / np.sqrt(self.dim)
        self._txt_proj = rng.normal(size=(4096, self.dim)) / np.sqrt(self.dim)

    def encode_images(self, images) -> np.ndarray:
        rows = []
        for img in images:
            g = img.convert("L").resize((_GRID, _GRID), Image.BILINEAR)
            x = np.asarray(g, dtype=np.float64).ravel() / 255.0
            x -= x.mean()
            rows.append(x @ self._img_proj)
        return _unit_rows(np.vstack(rows))

    def encode_texts(self, texts) -> np.ndarray:
        rows = []
        for text in texts:
            h = np.zeros(4096)
            padded = f"  {text.lower()}  "
            for i in range(len(padded) - 2):
                tri = padded[i:i + 3].encode("utf-8")
                bucket = int.from_bytes(hashlib.blake2b(tri, digest_size=4).digest(),
                                        "little") % 4096
                h[bucket] += 1.0
            rows.append(h @ self._txt_proj)
        return _unit_rows(np.vstack(rows))


class ClipEncoder:
    """CLIP checkpoint via sentence-transformers; requires the model locally."""

    name = "clip"

    def __init__(self, checkpoint: str = "clip-ViT-B-16"):
        from sentence_transformers import SentenceTransformer
        self._model = SentenceTransformer(checkpoint)

    def encode_images(self, images) -> np.ndarray:
        return _unit_rows(np.asarray(self._model.encode(list(images)), dtype=np.float64))

    def encode_texts(self, texts) -> np.ndarray:
        return _unit_rows(np.asarray(self._model.encode(list(texts)), dtype=np.float64))


def _unit_rows(m: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(m, axis=1, keepdims=True)
    norms[norms < 1e-12] = 1.0
    return m / norms


def make_encoder(name: str, **kwargs):
    if name == "stub":
        return StubEncoder(**kwargs)
    if name == "clip":
        return ClipEncoder(**kwargs)
    raise ValueError(f"unknown encoder {name!r}; expected 'stub' or 'clip'")
