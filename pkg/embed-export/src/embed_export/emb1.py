"""EMB1 writer.

The grammar is shared with the lorafuse pipeline (little-endian): magic
"EMB1", u32 dim, u64 count, then per record u16 id-length, id bytes
(UTF-8), u16 task-label length, label bytes, dim x f32 values. Vectors
are written unit-l2-norm; anything more than 1e-6 off gets renormalized
in float64 before the float32 cast, and degenerate vectors abort the
export.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"EMB1"
NORM_TOL = 1e-6
DEGENERATE_NORM = 1e-8


class Emb1WriteError(Exception):
    pass


def _unitize(vector: np.ndarray, record_id: str) -> np.ndarray:
    v64 = np.asarray(vector, dtype=np.float64)
    norm = float(np.linalg.norm(v64))
    if norm < DEGENERATE_NORM:
        raise Emb1WriteError(f"record {record_id!r} has degenerate norm {norm:g}")
    if abs(norm - 1.0) > NORM_TOL:
        v64 = v64 / norm
    return v64.astype(np.float32)


def write_emb1(path: str | Path, dim: int, records) -> int:
    """Write (id, task, vector) triples; returns the record count.

    `records` may be any iterable; the file is written atomically
    (temp file + rename) so rerunning an export never leaves a torn file.
    """
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    count = 0
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IQ", dim, 0))  # count patched below
        for record_id, task, vector in records:
            vector = _unitize(vector, record_id)
            if vector.shape != (dim,):
                raise Emb1WriteError(
                    f"record {record_id!r} has dim {vector.shape[0]}, expected {dim}"
                )
            id_bytes = record_id.encode("utf-8")
            task_bytes = task.encode("utf-8")
            if len(id_bytes) > 0xFFFF or len(task_bytes) > 0xFFFF:
                raise Emb1WriteError(f"id or task label too long: {record_id!r}")
            fh.write(struct.pack("<H", len(id_bytes)))
            fh.write(id_bytes)
            fh.write(struct.pack("<H", len(task_bytes)))
            fh.write(task_bytes)
            fh.write(np.ascontiguousarray(vector, dtype="<f4").tobytes())
            count += 1
        fh.seek(8)
        fh.write(struct.pack("<Q", count))
    tmp.replace(path)
    return count
