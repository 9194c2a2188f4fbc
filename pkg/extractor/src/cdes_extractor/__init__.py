"""Extraction scripts producing context dumps and gloss-augmented
inventories for the sense-embedding toolkit, via a deterministic offline
encoder or a pretrained transformer."""

from .encoders import HashEncoder, TransformersEncoder, make_encoder
from .extract import (
    ExtractionJob,
    ExtractReport,
    extract_corpus,
    extract_glosses,
    extract_sentences,
    extract_wic,
)

__version__ = "0.1.0"
