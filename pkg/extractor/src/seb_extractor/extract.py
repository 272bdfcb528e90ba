"""Dataset traversal and the extract job itself.

Datasets follow the class-per-subdirectory convention::

    dataset_root/
        <corruption>/<severity>/   (optional nesting, CIFAR-10-C style)
            airplane/*.png
            automobile/*.png
            ...

Class indices are assigned by sorted subdirectory name, and the anchor file's
row order matches those indices, so downstream consumers can map label i to
anchor row i directly.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

from PIL import Image

from .embfile import write_embeddings

IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg", ".bmp", ".ppm")
DEFAULT_TEMPLATE = "A photo of a {}"


class DatasetError(Exception):
    """Dataset directory missing or structurally unusable."""


@dataclass
class ExtractJob:
    dataset_dir: str
    out_images: str
    out_anchors: str
    corruption: str | None = None
    severity: int | None = None
    prompt_template: str = DEFAULT_TEMPLATE
    sample_cap: int = 1000
    batch_size: int = 64
    encoder: str = "stub"
    encoder_kwargs: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.sample_cap < self.batch_size:
            raise ValueError(
                f"sample_cap {self.sample_cap} must be >= batch_size {self.batch_size}"
            )
        if "{}" not in self.prompt_template:
            raise ValueError("prompt_template must contain a {} placeholder")

    @property
    def data_root(self) -> str:
        root = self.dataset_dir
        if self.corruption:
            root = os.path.join(root, self.corruption)
        if self.severity is not None:
            root = os.path.join(root, str(self.severity))
        return root


def list_classes(root: str) -> list[str]:
    if not os.path.isdir(root):
        raise DatasetError(f"dataset directory not found: {root}")
    classes = sorted(
        entry for entry in os.listdir(root)
        if os.path.isdir(os.path.join(root, entry))
    )
    if len(classes) < 2:
        raise DatasetError(f"need >= 2 class subdirectories under {root}, "
                           f"found {classes}")
    return classes


def iter_samples(root: str, classes: list[str], cap: int):
    """Yield (path, label) pairs in deterministic sorted order, up to cap,
    interleaved across classes so the cap never silently drops a class."""
    per_class = [
        sorted(
            os.path.join(root, cls, f)
            for f in os.listdir(os.path.join(root, cls))
            if f.lower().endswith(IMAGE_EXTENSIONS)
        )
        for cls in classes
    ]
    if all(not files for files in per_class):
        raise DatasetError(f"no images found under {root}")
    emitted = 0
    depth = 0
    while emitted < cap:
        progressed = False
        for label, files in enumerate(per_class):
            if depth < len(files) and emitted < cap:
                yield files[depth], label
                emitted += 1
                progressed = True
        if not progressed:
            break
        depth += 1


def run_extract(job: ExtractJob, encoder=None) -> dict:
    """Execute the job; returns a small summary dict.

    Both output files are written atomically, anchors first, so a crash
    mid-run never leaves a half-valid file.
    """
    from .encoders import make_encoder

    if encoder is None:
        encoder = make_encoder(job.encoder, **job.encoder_kwargs)
    root = job.data_root
    classes = list_classes(root)

    prompts = [job.prompt_template.format(cls) for cls in classes]
    anchors = encoder.encode_texts(prompts)

    paths, labels = [], []
    for path, label in iter_samples(root, classes, job.sample_cap):
        paths.append(path)
        labels.append(label)

    embeddings = []
    for start in range(0, len(paths), job.batch_size):
        batch_paths = paths[start:start + job.batch_size]
        images = []
        for p in batch_paths:
            with Image.open(p) as img:
                images.append(img.copy())
        embeddings.append(encoder.encode_images(images))

    import numpy as np
    matrix = np.vstack(embeddings)
    write_embeddings(job.out_anchors, anchors)
    write_embeddings(job.out_images, matrix, labels)
    return {
        "n_images": matrix.shape[0],
        "n_classes": len(classes),
        "dim": matrix.shape[1],
        "classes": classes,
    }
