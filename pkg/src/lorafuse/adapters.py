"""Low-rank adapter model and its on-disk directory format.

An adapter holds one (A, B) factor pair per target module (q_proj,
k_proj, ...) plus a scalar alpha and a shared rank r. A is (r, d_in),
B is (d_out, r); the dense update for one module is alpha * B @ A.

Directory format (docs/formats.md): `manifest.json` plus two raw
little-endian float32 row-major tensor files per module,
`{module}.A.bin` and `{module}.B.bin`. Scaling convention is recorded as
"alpha" — the merge equations apply alpha directly, so adapters trained
with an alpha/r convention must be pre-scaled before conversion.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError, NonFinite, ShapeMismatch

MANIFEST_NAME = "manifest.json"
SCALING_CONVENTION = "alpha"


@dataclass(frozen=True)
class LoraMatrixPair:
    """(A, B) factors for one target module; A: (r, d_in), B: (d_out, r)."""

    A: np.ndarray
    B: np.ndarray
    rank: int
    target_module: str

    def __post_init__(self):
        if self.A.ndim != 2 or self.B.ndim != 2:
            raise ShapeMismatch(f"{self.target_module}: A and B must be matrices")
        if self.A.shape[0] != self.rank or self.B.shape[1] != self.rank:
            raise ShapeMismatch(
                f"{self.target_module}: rank {self.rank} but A is {self.A.shape}, B is {self.B.shape}"
            )
        for name, tensor in (("A", self.A), ("B", self.B)):
            bad = np.flatnonzero(~np.isfinite(tensor))
            if bad.size:
                raise NonFinite(f"{self.target_module}.{name}", int(bad[0]))

    @property
    def d_in(self) -> int:
        return int(self.A.shape[1])

    @property
    def d_out(self) -> int:
        return int(self.B.shape[0])


@dataclass(frozen=True)
class LoraAdapter:
    name: str
    task: str
    alpha: float
    pairs: dict[str, LoraMatrixPair] = field(default_factory=dict)

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError(f"alpha must be > 0, got {self.alpha}")
        if not self.pairs:
            raise ValueError(f"adapter {self.name!r} has no target modules")
        ranks = {pair.rank for pair in self.pairs.values()}
        if len(ranks) != 1:
            raise ShapeMismatch(f"adapter {self.name!r} mixes ranks {sorted(ranks)}")

    @property
    def rank(self) -> int:
        return next(iter(self.pairs.values())).rank


@dataclass(frozen=True)
class MergedDelta:
    """Merge result: low-rank (A, B, effective_rank) or dense deltas per module."""

    kind: str  # "low_rank" | "dense"
    low_rank: dict[str, LoraMatrixPair] = field(default_factory=dict)
    effective_rank: int = 0
    dense: dict[str, np.ndarray] = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)

    def delta_for(self, module: str) -> np.ndarray:
        """Dense update for one module, whatever the kind (float64)."""
        if self.kind == "dense":
            return self.dense[module]
        pair = self.low_rank[module]
        return pair.B.astype(np.float64) @ pair.A.astype(np.float64)


def delta(pair: LoraMatrixPair, alpha: float) -> np.ndarray:
    """Dense update alpha * B @ A for one module, accumulated in float64."""
    if pair.B.shape[1] != pair.A.shape[0]:
        raise ShapeMismatch(
            f"{pair.target_module}: B is {pair.B.shape} but A is {pair.A.shape}"
        )
    return alpha * (pair.B.astype(np.float64) @ pair.A.astype(np.float64))


def save_adapter(adapter: LoraAdapter, directory: str | Path) -> None:
    """Write manifest + tensor files; deterministic bytes for a given adapter."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    modules = {}
    for module in sorted(adapter.pairs):
        pair = adapter.pairs[module]
        (directory / f"{module}.A.bin").write_bytes(
            np.ascontiguousarray(pair.A, dtype="<f4").tobytes()
        )
        (directory / f"{module}.B.bin").write_bytes(
            np.ascontiguousarray(pair.B, dtype="<f4").tobytes()
        )
        modules[module] = {"d_out": pair.d_out, "d_in": pair.d_in}
    manifest = {
        "name": adapter.name,
        "task": adapter.task,
        "alpha": adapter.alpha,
        "rank": adapter.rank,
        "scaling_convention": SCALING_CONVENTION,
        "modules": modules,
    }
    (directory / MANIFEST_NAME).write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def load_adapter(directory: str | Path) -> LoraAdapter:
    """Load and validate an adapter directory.

    Tensor file sizes are checked against the manifest shapes before any
    reshape, so a rank/shape lie surfaces as ShapeMismatch rather than a
    numpy error; NaN/Inf entries are rejected with NonFinite.
    """
    directory = Path(directory)
    manifest_path = directory / MANIFEST_NAME
    if not manifest_path.is_file():
        raise FormatError(f"missing {MANIFEST_NAME} in {directory}")
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"unparseable manifest in {directory}: {exc}") from exc
    for key in ("name", "task", "alpha", "rank", "modules"):
        if key not in manifest:
            raise FormatError(f"manifest in {directory} lacks {key!r}")
    rank = int(manifest["rank"])
    pairs: dict[str, LoraMatrixPair] = {}
    for module, dims in manifest["modules"].items():
        d_out, d_in = int(dims["d_out"]), int(dims["d_in"])
        a = _load_matrix(directory / f"{module}.A.bin", (rank, d_in), f"{module}.A")
        b = _load_matrix(directory / f"{module}.B.bin", (d_out, rank), f"{module}.B")
        pairs[module] = LoraMatrixPair(A=a, B=b, rank=rank, target_module=module)
    return LoraAdapter(
        name=str(manifest["name"]),
        task=str(manifest["task"]),
        alpha=float(manifest["alpha"]),
        pairs=pairs,
    )


def _load_matrix(path: Path, shape: tuple[int, int], label: str) -> np.ndarray:
    if not path.is_file():
        raise FormatError(f"missing tensor file {path}")
    raw = path.read_bytes()
    expected = shape[0] * shape[1] * 4
    if len(raw) != expected:
        raise ShapeMismatch(
            f"{label}: manifest implies shape {shape} ({expected} bytes) "
            f"but {path.name} holds {len(raw)} bytes"
        )
    matrix = np.frombuffer(raw, dtype="<f4").reshape(shape).copy()
    bad = np.flatnonzero(~np.isfinite(matrix))
    if bad.size:
        raise NonFinite(label, int(bad[0]))
    return matrix


def adapter_digest(directory: str | Path) -> str:
    """sha256 over the manifest and tensor files, for provenance records."""
    directory = Path(directory)
    digest = hashlib.sha256()
    for path in sorted(directory.iterdir()):
        if path.suffix in (".bin", ".json") and path.is_file():
            digest.update(path.name.encode("utf-8"))
            digest.update(path.read_bytes())
    return digest.hexdigest()
