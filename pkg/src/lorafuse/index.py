"""Task-aware cosine vector index.

Two backends share one record store:

* exact — O(n*d) scan over a float64 copy of the vectors; the ground
  truth every other backend is validated against.
* hnsw — an in-process navigable-small-world graph (M=16,
  ef_construction=200, ef_search=128 by default) for sublinear search.

Distances are cosine distances 1 - <q, v> over l2-normalized vectors,
clamped at 0 against float rounding. Result lists are sorted by
(distance, id) so equal distances break ties on ascending id and every
query has exactly one correct answer.

Snapshot grammar (LFIX, little-endian, docs/formats.md): magic "LFIX",
u32 version, u32 dim, u64 count, then per record the EMB1 record layout
(u16 id-length + id, u16 task-length + task, dim x f32) followed by a
u32 text-length + UTF-8 payload text.
"""

from __future__ import annotations

import heapq
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DimensionMismatch, DuplicateId, EmptyIndex, FormatError
from .prng import SplitMix64

LFIX_MAGIC = b"LFIX"
LFIX_VERSION = 1
DEFAULT_CHUNK = 4000

HNSW_M = 16
HNSW_EF_CONSTRUCTION = 200
HNSW_EF_SEARCH = 128
_HNSW_LEVEL_SEED = 0x5EED_CAFE  # fixed so rebuilt graphs are identical


@dataclass(frozen=True)
class IndexedExample:
    id: str
    task: str
    vector: np.ndarray  # float32, unit norm
    text: str = ""


@dataclass(frozen=True)
class Neighbour:
    id: str
    task: str
    distance: float


class VectorIndex:
    """Append-only cosine index with exact and HNSW search backends.

    Single-writer build phase; call :meth:`freeze` (or just start querying,
    which freezes implicitly) before sharing across reader threads.
    """

    def __init__(self, dim: int, backend: str = "exact", chunk: int = DEFAULT_CHUNK):
        if backend not in ("exact", "hnsw"):
            raise ValueError(f"unknown backend {backend!r}")
        if chunk < 1:
            raise ValueError(f"chunk must be >= 1, got {chunk}")
        self.dim = dim
        self.backend = backend
        self.chunk = chunk
        self.records: list[IndexedExample] = []
        self._ids: set[str] = set()
        self.last_batch_sizes: list[int] = []
        self._matrix: np.ndarray | None = None  # float64, renormalized rows
        self._id_array: np.ndarray | None = None
        self._graph: _HnswGraph | None = None

    def __len__(self) -> int:
        return len(self.records)

    # -- build ----------------------------------------------------------

    def insert_batch(self, items: list[IndexedExample], chunk: int | None = None) -> int:
        """Append items in chunks; returns the number inserted.

        Duplicate ids and dimension mismatches abort before anything is
        appended, so a failed call leaves the index unchanged.
        """
        chunk = self.chunk if chunk is None else chunk
        if chunk < 1:
            raise ValueError(f"chunk must be >= 1, got {chunk}")
        for item in items:
            if item.vector.shape != (self.dim,):
                raise DimensionMismatch(self.dim, int(item.vector.shape[0]), what=f"item {item.id!r}")
        seen: set[str] = set()
        for item in items:
            if item.id in self._ids or item.id in seen:
                raise DuplicateId(item.id)
            seen.add(item.id)
        self.last_batch_sizes = []
        for start in range(0, len(items), chunk):
            batch = items[start : start + chunk]
            self.records.extend(batch)
            self._ids.update(item.id for item in batch)
            self.last_batch_sizes.append(len(batch))
        self._matrix = None
        self._graph = None
        return len(items)

    def freeze(self) -> None:
        """Finalize search structures; subsequent concurrent reads are safe."""
        if self._matrix is not None:
            return
        if self.records:
            raw = np.stack([r.vector for r in self.records]).astype(np.float64)
            norms = np.linalg.norm(raw, axis=1, keepdims=True)
            norms[norms == 0.0] = 1.0
            self._matrix = raw / norms
            self._id_array = np.array([r.id for r in self.records])
        else:
            self._matrix = np.zeros((0, self.dim), dtype=np.float64)
            self._id_array = np.array([], dtype=str)
        if self.backend == "hnsw" and len(self.records):
            self._graph = _HnswGraph(self._matrix)

    # -- search ---------------------------------------------------------

    def query(self, q: np.ndarray, k: int) -> list[Neighbour]:
        """Return min(k, size) neighbours sorted by (distance, id)."""
        if k < 1:
            raise ValueError(f"k must be >= 1, got {k}")
        if not self.records:
            raise EmptyIndex()
        if q.shape != (self.dim,):
            raise DimensionMismatch(self.dim, int(q.shape[0]), what="query")
        self.freeze()
        q64 = q.astype(np.float64)
        qnorm = float(np.linalg.norm(q64))
        if qnorm > 0.0:
            q64 = q64 / qnorm
        if self.backend == "hnsw" and self._graph is not None:
            candidate_rows = self._graph.search(q64, max(k, HNSW_EF_SEARCH))
        else:
            candidate_rows = np.arange(len(self.records))
        distances = 1.0 - self._matrix[candidate_rows] @ q64
        np.maximum(distances, 0.0, out=distances)
        order = np.lexsort((self._id_array[candidate_rows], distances))[:k]
        out = []
        for pos in order:
            record = self.records[int(candidate_rows[pos])]
            out.append(Neighbour(id=record.id, task=record.task, distance=float(distances[pos])))
        return out

    # -- persistence ------------------------------------------------------

    def save(self, path: str | Path) -> None:
        """Write the LFIX snapshot; record order is insertion order, bit-exact."""
        path = Path(path)
        tmp = path.with_name(path.name + ".tmp")
        with open(tmp, "wb") as fh:
            fh.write(LFIX_MAGIC)
            fh.write(struct.pack("<IIQ", LFIX_VERSION, self.dim, len(self.records)))
            for record in self.records:
                id_bytes = record.id.encode("utf-8")
                task_bytes = record.task.encode("utf-8")
                text_bytes = record.text.encode("utf-8")
                if len(id_bytes) > 0xFFFF or len(task_bytes) > 0xFFFF:
                    raise FormatError(f"id or task too long for record header: {record.id!r}")
                fh.write(struct.pack("<H", len(id_bytes)))
                fh.write(id_bytes)
                fh.write(struct.pack("<H", len(task_bytes)))
                fh.write(task_bytes)
                fh.write(np.ascontiguousarray(record.vector, dtype="<f4").tobytes())
                fh.write(struct.pack("<I", len(text_bytes)))
                fh.write(text_bytes)
        tmp.replace(path)

    @classmethod
    def load(cls, path: str | Path, backend: str = "exact") -> "VectorIndex":
        path = Path(path)
        data = path.read_bytes()
        if len(data) < 20 or data[:4] != LFIX_MAGIC:
            raise FormatError(f"not an LFIX snapshot: {path}", offset=0)
        version, dim, count = struct.unpack_from("<IIQ", data, 4)
        if version != LFIX_VERSION:
            raise FormatError(f"unsupported snapshot version {version}", offset=4)
        index = cls(dim=dim, backend=backend)
        offset = 20
        records = []
        for _ in range(count):
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
                    raise struct.error("truncated task")
                task = data[offset : offset + task_len].decode("utf-8")
                offset += task_len
                if len(data) < offset + dim * 4:
                    raise struct.error("truncated vector")
                vector = np.frombuffer(data, dtype="<f4", count=dim, offset=offset).copy()
                offset += dim * 4
                (text_len,) = struct.unpack_from("<I", data, offset)
                offset += 4
                if len(data) < offset + text_len:
                    raise struct.error("truncated text payload")
                text = data[offset : offset + text_len].decode("utf-8")
                offset += text_len
            except (struct.error, UnicodeDecodeError) as exc:
                raise FormatError(f"corrupt record: {exc}", offset=offset) from exc
            records.append(IndexedExample(id=example_id, task=task, vector=vector, text=text))
        if offset != len(data):
            raise FormatError("trailing bytes after final record", offset=offset)
        if records:
            index.insert_batch(records)
        return index

    def task_counts(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for record in self.records:
            counts[record.task] = counts.get(record.task, 0) + 1
        return counts


class _HnswGraph:
    """Minimal hierarchical NSW graph over a fixed row matrix.

    Build order and level assignment are fully deterministic (SplitMix64
    with a fixed seed), so rebuilding from the same records yields the
    same graph and therefore identical query answers.
    """

    def __init__(
        self,
        matrix: np.ndarray,
        m: int = HNSW_M,
        ef_construction: int = HNSW_EF_CONSTRUCTION,
    ):
        self.matrix = matrix
        self.m = m
        self.m0 = 2 * m
        self.ef_construction = ef_construction
        self.ml = 1.0 / math.log(2.0)
        n = matrix.shape[0]
        rng = SplitMix64(_HNSW_LEVEL_SEED)
        self.levels = np.empty(n, dtype=np.int64)
        for i in range(n):
            u = (rng.next_u64() >> 11) * 2.0**-53  # uniform in [0, 1)
            self.levels[i] = int(-math.log(1.0 - u) * self.ml)
        self.max_level = int(self.levels.max(initial=0))
        # neighbours[layer][node] -> list of node rows
        self.neighbours: list[dict[int, list[int]]] = [dict() for _ in range(self.max_level + 1)]
        self.entry_point = 0
        for i in range(n):
            self._insert(i)

    def _distances(self, q: np.ndarray, rows: list[int]) -> np.ndarray:
        return 1.0 - self.matrix[rows] @ q

    def _search_layer(self, q: np.ndarray, entries: list[int], ef: int, layer: int) -> list[tuple[float, int]]:
        visited = set(entries)
        dists = self._distances(q, entries)
        candidates = [(float(d), e) for d, e in zip(dists, entries)]
        heapq.heapify(candidates)
        best = [(-d, e) for d, e in candidates]
        heapq.heapify(best)
        adjacency = self.neighbours[layer]
        while candidates:
            dist, node = heapq.heappop(candidates)
            if best and dist > -best[0][0] and len(best) >= ef:
                break
            fresh = [nb for nb in adjacency.get(node, ()) if nb not in visited]
            if not fresh:
                continue
            visited.update(fresh)
            for nb, d in zip(fresh, self._distances(q, fresh)):
                d = float(d)
                if len(best) < ef or d < -best[0][0]:
                    heapq.heappush(candidates, (d, nb))
                    heapq.heappush(best, (-d, nb))
                    if len(best) > ef:
                        heapq.heappop(best)
        return sorted((-d, e) for d, e in best)

    def _insert(self, node: int) -> None:
        level = int(self.levels[node])
        if node == 0:
            for layer in range(level + 1):
                self.neighbours[layer][node] = []
            self.entry_point = node
            self._entry_level = level
            return
        q = self.matrix[node]
        entries = [self.entry_point]
        for layer in range(self._entry_level, level, -1):
            entries = [self._search_layer(q, entries, 1, layer)[0][1]]
        for layer in range(min(level, self._entry_level), -1, -1):
            found = self._search_layer(q, entries, self.ef_construction, layer)
            cap = self.m0 if layer == 0 else self.m
            chosen = [e for _, e in found[:cap]]
            self.neighbours[layer][node] = list(chosen)
            for other in chosen:
                links = self.neighbours[layer].setdefault(other, [])
                links.append(node)
                if len(links) > cap:
                    pruned = sorted(zip(self._distances(self.matrix[other], links), links))
                    self.neighbours[layer][other] = [e for _, e in pruned[:cap]]
            entries = [e for _, e in found]
        if level > self._entry_level:
            for layer in range(self._entry_level + 1, level + 1):
                self.neighbours[layer].setdefault(node, [])
            self.entry_point = node
            self._entry_level = level

    def search(self, q: np.ndarray, ef: int) -> np.ndarray:
        entries = [self.entry_point]
        for layer in range(self._entry_level, 0, -1):
            entries = [self._search_layer(q, entries, 1, layer)[0][1]]
        found = self._search_layer(q, entries, ef, 0)
        return np.array([e for _, e in found], dtype=np.int64)
