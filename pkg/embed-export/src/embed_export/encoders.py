"""Sentence encoders behind one tiny interface: encode(list[str]) -> float32 matrix.

The default is the frozen all-MiniLM-L6-v2 SentenceTransformer (384
dims), pinned to a model-hub revision so exports stay reproducible. The
hashing encoder implements the scheme documented in the pipeline's
docs/formats.md (blake2b bag-of-words with +/-1 signs) and exists for
offline tests and air-gapped runs; it needs no model files.
"""

from __future__ import annotations

import hashlib
import re

import numpy as np

DEFAULT_MODEL = "sentence-transformers/all-MiniLM-L6-v2"
# revision pin for the default encoder; update deliberately, never implicitly
DEFAULT_REVISION = "main"
MINILM_DIM = 384

_TOKEN_RE = re.compile(r"[a-z0-9]+")


class EncoderLoadError(Exception):
    pass


class HashingEncoder:
    """Deterministic hashed bag-of-words; matches the pipeline's test embedder."""

    def __init__(self, dim: int = MINILM_DIM):
        if dim < 1:
            raise ValueError(f"dim must be >= 1, got {dim}")
        self.dim = dim
        self.name = f"hashing-{dim}"

    def encode(self, texts: list[str]) -> np.ndarray:
        out = np.zeros((len(texts), self.dim), dtype=np.float64)
        for row, text in enumerate(texts):
            for token in _TOKEN_RE.findall(text.lower()):
                digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
                h = int.from_bytes(digest, "little")
                sign = 1.0 if (h >> 63) & 1 == 0 else -1.0
                out[row, h % self.dim] += sign
            norm = np.linalg.norm(out[row])
            if norm > 0.0:
                out[row] /= norm
        return out.astype(np.float32)


class MiniLMEncoder:
    """Frozen SentenceTransformer encoder; normalizes every vector."""

    def __init__(
        self,
        model_name: str = DEFAULT_MODEL,
        revision: str = DEFAULT_REVISION,
        device: str = "cpu",
        batch_size: int = 64,
    ):
        try:
            from sentence_transformers import SentenceTransformer
        except ImportError as exc:
            raise EncoderLoadError(
                "sentence-transformers is not installed; "
                "pip install 'embed-export[minilm]'"
            ) from exc
        try:
            self._model = SentenceTransformer(model_name, revision=revision, device=device)
        except Exception as exc:
            raise EncoderLoadError(f"cannot load encoder {model_name}@{revision}: {exc}") from exc
        self.batch_size = batch_size
        self.dim = int(self._model.get_sentence_embedding_dimension())
        self.name = f"{model_name}@{revision}"

    def encode(self, texts: list[str]) -> np.ndarray:
        vectors = self._model.encode(
            texts,
            batch_size=self.batch_size,
            convert_to_numpy=True,
            normalize_embeddings=True,
            show_progress_bar=False,
        )
        return np.asarray(vectors, dtype=np.float32)


def make_encoder(spec: dict, device: str = "cpu", batch_size: int = 64):
    """Build an encoder from a config mapping.

    {"name": "hashing", "dim": 384} or
    {"name": "<sentence-transformers model>", "revision": "<pin>"}.
    """
    name = spec.get("name", DEFAULT_MODEL)
    if name == "hashing":
        return HashingEncoder(dim=int(spec.get("dim", MINILM_DIM)))
    return MiniLMEncoder(
        model_name=name,
        revision=spec.get("revision", DEFAULT_REVISION),
        device=device,
        batch_size=batch_size,
    )
