"""Unit-norm embedding providers and the EMB1 on-disk store.

Two providers back the pipeline:

* :class:`HashingEmbedder` — a deterministic bag-of-words embedder: tokens
  are lowercased, split on non-alphanumerics, hashed with 64-bit blake2b,
  scattered into `dim` buckets with +/-1 signs, and l2-normalized. It is
  the default for tests and synthetic benchmarks and needs no model files.
* :class:`StoreProvider` — serves precomputed vectors (e.g. MiniLM exports
  written by the offline export tool) keyed by example id.

Both return float32 vectors with l2 norm 1 +/- 1e-5.

EMB1 binary grammar (little-endian, documented in docs/formats.md):
magic "EMB1", u32 dim, u64 count, then per record u16 id-length, id bytes
(UTF-8), u16 task-label length, label bytes, dim x f32 values.
"""

from __future__ import annotations

import hashlib
import math
import re
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DimensionMismatch, FormatError, NormError, UnknownText

EMB1_MAGIC = b"EMB1"
DEFAULT_DIM = 384

_TOKEN_RE = re.compile(r"[a-z0-9]+")

# Stored vectors within this of unit norm keep their exact bits on load;
# anything further gets renormalized. Keeps load->save->load byte-stable.
UNIT_NORM_TOL = 1e-5
_DEGENERATE_NORM = 1e-8


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


def _token_hash(token: str, position: int | None = None) -> int:
    data = token if position is None else f"{position}\x1f{token}"
    digest = hashlib.blake2b(data.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def ensure_unit(vector: np.ndarray, what: str = "vector") -> None:
    norm = float(np.linalg.norm(vector.astype(np.float64)))
    if abs(norm - 1.0) > UNIT_NORM_TOL:
        raise NormError(what, norm)


class HashingEmbedder:
    """Deterministic hashed bag-of-words embedder.

    With `bag_of_words=True` (the default) the embedding is invariant to
    token order; set it False to hash (position, token) pairs instead.
    """

    def __init__(self, dim: int = DEFAULT_DIM, bag_of_words: bool = True):
        if dim < 1:
            raise ValueError(f"dim must be >= 1, got {dim}")
        self.dim = dim
        self.bag_of_words = bag_of_words
        self.provenance = f"hashing-bow-{dim}" if bag_of_words else f"hashing-pos-{dim}"

    def embed(self, text: str, example_id: str | None = None) -> np.ndarray:
        if not text:
            raise ValueError("text must be non-empty")
        tokens = tokenize(text)
        buckets = np.zeros(self.dim, dtype=np.float64)
        for pos, token in enumerate(tokens):
            h = _token_hash(token, None if self.bag_of_words else pos)
            sign = 1.0 if (h >> 63) & 1 == 0 else -1.0
            buckets[h % self.dim] += sign
        norm = float(np.linalg.norm(buckets))
        if norm < _DEGENERATE_NORM:
            raise NormError(example_id or text[:40], norm)
        return (buckets / norm).astype(np.float32)


@dataclass
class EmbeddingStore:
    """All vectors of one export: fixed dim, unique ids, encoder provenance."""

    dim: int
    entries: dict[str, np.ndarray] = field(default_factory=dict)
    tasks: dict[str, str] = field(default_factory=dict)
    provenance: str = "unknown"

    def add(self, example_id: str, task: str, vector: np.ndarray) -> None:
        if example_id in self.entries:
            raise FormatError(f"duplicate id {example_id!r} in store")
        if vector.shape != (self.dim,):
            raise DimensionMismatch(self.dim, int(vector.shape[0]), what=f"vector {example_id!r}")
        self.entries[example_id] = np.asarray(vector, dtype=np.float32)
        self.tasks[example_id] = task

    def __len__(self) -> int:
        return len(self.entries)


class StoreProvider:
    """Read-only provider over an :class:`EmbeddingStore`, keyed by example id."""

    def __init__(self, store: EmbeddingStore):
        self.store = store
        self.dim = store.dim
        self.provenance = store.provenance

    def embed(self, text: str, example_id: str | None = None) -> np.ndarray:
        if example_id is None:
            raise UnknownText("<no id supplied>")
        vector = self.store.entries.get(example_id)
        if vector is None:
            raise UnknownText(example_id)
        return vector


def embed_text(text: str, provider) -> np.ndarray:
    """Embed query text with a provider and check the unit-norm contract."""
    vector = provider.embed(text)
    ensure_unit(vector, what=text[:40])
    return vector


def save_embedding_store(store: EmbeddingStore, path: str | Path) -> None:
    """Write the store as EMB1. Record order is insertion order; bit-exact."""
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(EMB1_MAGIC)
        fh.write(struct.pack("<IQ", store.dim, len(store.entries)))
        for example_id, vector in store.entries.items():
            task = store.tasks.get(example_id, "")
            _write_record(fh, example_id, task, vector)


def _write_record(fh, example_id: str, task: str, vector: np.ndarray) -> None:
    id_bytes = example_id.encode("utf-8")
    task_bytes = task.encode("utf-8")
    if len(id_bytes) > 0xFFFF or len(task_bytes) > 0xFFFF:
        raise FormatError(f"id or task label too long for record header: {example_id!r}")
    fh.write(struct.pack("<H", len(id_bytes)))
    fh.write(id_bytes)
    fh.write(struct.pack("<H", len(task_bytes)))
    fh.write(task_bytes)
    fh.write(np.ascontiguousarray(vector, dtype="<f4").tobytes())


def load_embedding_store(path: str | Path) -> EmbeddingStore:
    """Load an EMB1 file, renormalizing any vector more than 1e-5 off unit norm.

    Raises FormatError (with the byte offset) on truncation or a bad
    header, NormError on a stored vector with norm below 1e-8.
    """
    path = Path(path)
    data = path.read_bytes()
    if len(data) < 16 or data[:4] != EMB1_MAGIC:
        raise FormatError(f"not an EMB1 file: {path}", offset=0)
    dim, count = struct.unpack_from("<IQ", data, 4)
    if dim < 1:
        raise FormatError("EMB1 header declares dim 0", offset=4)
    store = EmbeddingStore(dim=dim, provenance=str(path.name))
    offset = 16
    for _ in range(count):
        example_id, task, vector, offset = _read_record(data, offset, dim)
        norm = float(np.linalg.norm(vector.astype(np.float64)))
        if norm < _DEGENERATE_NORM:
            raise NormError(example_id, norm)
        if abs(norm - 1.0) > UNIT_NORM_TOL:
            vector = (vector.astype(np.float64) / norm).astype(np.float32)
        store.add(example_id, task, vector)
    if offset != len(data):
        raise FormatError("trailing bytes after final record", offset=offset)
    return store


def _read_record(data: bytes, offset: int, dim: int) -> tuple[str, str, np.ndarray, int]:
    try:
        (id_len,) = struct.unpack_from("<H", data, offset)
        offset += 2
        if len(data) < offset + id_len:
            raise struct.error("truncated id")
        example_id = data[offset : offset + id_len].decode("utf-8")
        offset += id_len
        (task_len,) = struct.unpack_from("<H", data, offset)
        offset += 2
        if len(data) < offset + task_len:
            raise struct.error("truncated task label")
        task = data[offset : offset + task_len].decode("utf-8")
        offset += task_len
        vec_bytes = dim * 4
        if len(data) < offset + vec_bytes:
            raise struct.error("truncated vector")
        vector = np.frombuffer(data, dtype="<f4", count=dim, offset=offset).copy()
        offset += vec_bytes
    except (struct.error, UnicodeDecodeError) as exc:
        raise FormatError(f"corrupt record: {exc}", offset=offset) from exc
    return example_id, task, vector, offset


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity in float64 (vectors need not be unit norm)."""
    a64 = a.astype(np.float64)
    b64 = b.astype(np.float64)
    denom = math.sqrt(float(a64 @ a64)) * math.sqrt(float(b64 @ b64))
    if denom == 0.0:
        return 0.0
    return float(a64 @ b64) / denom
