"""Offline embedding exporter: corpora and queries -> EMB1 files."""

from .emb1 import write_emb1
from .encoders import HashingEncoder, MiniLMEncoder, make_encoder
from .export import ExportJob, InputSpec, embed_query, export

__version__ = "0.1.0"

__all__ = [
    "ExportJob",
    "HashingEncoder",
    "InputSpec",
    "MiniLMEncoder",
    "embed_query",
    "export",
    "make_encoder",
    "write_emb1",
]
