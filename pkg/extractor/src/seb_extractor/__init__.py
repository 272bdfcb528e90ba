"""Embedding extractor: encodes image datasets and class prompts into the
SEB1 binary embedding format consumed by the adaptation pipeline."""

from .embfile import EmbFileError, read_embeddings, write_embeddings
from .encoders import ClipEncoder, StubEncoder, make_encoder
from .extract import DatasetError, ExtractJob, run_extract

__version__ = "0.1.0"

__all__ = [
    "ClipEncoder", "DatasetError", "EmbFileError", "ExtractJob", "StubEncoder",
    "make_encoder", "read_embeddings", "run_extract", "write_embeddings",
]
