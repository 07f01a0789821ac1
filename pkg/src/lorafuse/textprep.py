"""Row flattening: heterogeneous dataset rows -> one instruction-scaffolded text string.

Each task declares which columns carry text and which bracketed marker
labels each column boundary. Rows collapse to

    "<hint> [SEP_1] value_1 [SEP_2] value_2 ..."

with the hint omitted when empty. Gold-label columns must never be listed
as text columns; the ingest config validation enforces that so answers
cannot leak into retrieval text.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import InvalidConfig, MissingColumn
from .prng import fisher_yates

DEFAULT_SAMPLE_CAP = 2000


@dataclass(frozen=True)
class TaskSpec:
    """How one task's rows map to flattened text."""

    task_name: str
    hint: str
    text_columns: tuple[str, ...]
    separator_labels: tuple[str, ...]
    label_columns: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.task_name:
            raise InvalidConfig("task_name must be non-empty")
        if not self.text_columns:
            raise InvalidConfig(f"task {self.task_name!r}: text_columns must be non-empty")
        if len(self.separator_labels) != len(self.text_columns):
            raise InvalidConfig(
                f"task {self.task_name!r}: {len(self.separator_labels)} separator labels "
                f"for {len(self.text_columns)} text columns"
            )
        leaked = set(self.text_columns) & set(self.label_columns)
        if leaked:
            raise InvalidConfig(
                f"task {self.task_name!r}: label column(s) {sorted(leaked)} listed as text "
                "columns; gold answers must not enter retrieval text"
            )


@dataclass(frozen=True)
class FlatExample:
    """One flattened row: stable id, scaffolded text, task label."""

    id: str
    text: str
    task: str


def unify_row(row: dict[str, str], spec: TaskSpec, index: int) -> FlatExample:
    """Flatten one row into a FlatExample.

    The output text is the hint (if any) followed by "<sep> <value>" pieces
    in declared column order, single-space joined. Pure: identical inputs
    produce byte-identical output. `index` is the row's position in its
    source file and fixes the id as "<task_name>:<index>".
    """
    parts: list[str] = []
    if spec.hint:
        parts.append(spec.hint)
    for column, sep in zip(spec.text_columns, spec.separator_labels):
        if column not in row:
            raise MissingColumn(column)
        parts.append(f"{sep} {row[column]}")
    return FlatExample(id=f"{spec.task_name}:{index}", text=" ".join(parts), task=spec.task_name)


def unify_rows(rows: list[dict[str, str]], spec: TaskSpec) -> list[FlatExample]:
    return [unify_row(row, spec, i) for i, row in enumerate(rows)]


def sample_per_task(rows: list[FlatExample], cap: int = DEFAULT_SAMPLE_CAP, seed: int = 0) -> list[FlatExample]:
    """Seeded Fisher-Yates shuffle, then the first min(cap, len(rows)) rows.

    Output order is stable across runs for the same seed; empty input
    yields empty output.
    """
    if cap < 1:
        raise ValueError(f"cap must be >= 1, got {cap}")
    if not rows:
        return []
    shuffled = fisher_yates(rows, seed)
    return shuffled[: min(cap, len(shuffled))]
