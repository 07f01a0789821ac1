"""Exception hierarchy shared across the package.

Every error the pipeline can raise deliberately is a subclass of
:class:`LorafuseError`, so callers (and the CLI exit-code mapping) can
distinguish our failures from genuine bugs.
"""

from __future__ import annotations


class LorafuseError(Exception):
    """Base class for all deliberate lorafuse failures."""


class InvalidConfig(LorafuseError):
    """A config file or programmatic configuration violates its contract."""


# --- textprep ---------------------------------------------------------------

class MissingColumn(LorafuseError):
    def __init__(self, column: str):
        super().__init__(f"declared text column {column!r} is absent from the row")
        self.column = column


# --- embed ------------------------------------------------------------------

class EmbeddingError(LorafuseError):
    """Base class for embedding-provider failures."""


class UnknownText(EmbeddingError):
    def __init__(self, example_id: str):
        super().__init__(f"no precomputed embedding for id {example_id!r}")
        self.example_id = example_id


class DimensionMismatch(LorafuseError):
    def __init__(self, expected: int, got: int, what: str = "vector"):
        super().__init__(f"{what} has dim {got}, expected {expected}")
        self.expected = expected
        self.got = got


class NormError(EmbeddingError):
    def __init__(self, example_id: str, norm: float):
        super().__init__(f"vector {example_id!r} has degenerate norm {norm:g}")
        self.example_id = example_id
        self.norm = norm


class FormatError(LorafuseError):
    """A binary file does not match its declared grammar."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


# --- index ------------------------------------------------------------------

class IndexError_(LorafuseError):
    """Base class for index failures (trailing underscore avoids the builtin)."""


class DuplicateId(IndexError_):
    def __init__(self, example_id: str):
        super().__init__(f"id {example_id!r} is already present in the index")
        self.example_id = example_id


class EmptyIndex(IndexError_):
    def __init__(self):
        super().__init__("cannot query an empty index")


# --- weights ----------------------------------------------------------------

class NegativeDistance(LorafuseError):
    def __init__(self, d: float):
        super().__init__(f"cosine distance must be >= 0, got {d:g}")
        self.d = d


class EmptyNeighbourList(LorafuseError):
    def __init__(self):
        super().__init__("cannot aggregate an empty neighbour list")


class InvalidP(LorafuseError):
    def __init__(self, p: float):
        super().__init__(f"nucleus p must be in (0, 1], got {p:g}")
        self.p = p


class UnnormalizedInput(LorafuseError):
    def __init__(self, total: float):
        super().__init__(f"task masses must sum to 1 +/- 1e-9, got {total!r}")
        self.total = total


# --- adapters / merge -------------------------------------------------------

class ShapeMismatch(LorafuseError):
    pass


class RankMismatch(LorafuseError):
    pass


class InvalidDensity(LorafuseError):
    def __init__(self, density: float):
        super().__init__(f"density must be in (0, 1], got {density:g}")
        self.density = density


class NonFinite(LorafuseError):
    def __init__(self, tensor: str, index: int):
        super().__init__(f"tensor {tensor!r} has a non-finite entry at flat index {index}")
        self.tensor = tensor
        self.index = index


class AdapterResolutionError(LorafuseError):
    """A weighted task has no adapter on disk (and renormalization was not requested)."""
