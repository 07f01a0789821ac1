"""Batch corpus export and ad-hoc query embedding into EMB1 files.

Record ids follow the pipeline's `{task}:{row_index}` scheme with the
row index taken from the source CSV before any downstream sampling, so
the pipeline's file-backed provider can resolve every sampled row.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

from .emb1 import write_emb1

logger = logging.getLogger("embed_export")


@dataclass
class InputSpec:
    task: str
    csv_path: Path
    text_column: str = "text"


@dataclass
class ExportJob:
    inputs: list[InputSpec]
    out_path: Path
    encoder_spec: dict = field(default_factory=dict)
    batch_size: int = 64
    device: str = "cpu"

    @classmethod
    def from_config(cls, config: dict, base_dir: Path | None = None) -> "ExportJob":
        base = base_dir or Path(".")
        inputs = [
            InputSpec(
                task=str(entry["task"]),
                csv_path=base / entry["csv_path"],
                text_column=str(entry.get("text_column", "text")),
            )
            for entry in config.get("inputs", [])
        ]
        return cls(
            inputs=inputs,
            out_path=base / config["out"],
            encoder_spec=dict(config.get("encoder", {})),
            batch_size=int(config.get("batch_size", 64)),
            device=str(config.get("device", "cpu")),
        )


def _read_rows(spec: InputSpec) -> list[tuple[str, str]]:
    with open(spec.csv_path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        rows = []
        for i, row in enumerate(reader):
            if spec.text_column not in row:
                raise KeyError(
                    f"{spec.csv_path} has no column {spec.text_column!r} (row {i})"
                )
            rows.append((f"{spec.task}:{i}", row[spec.text_column]))
    return rows


def export(job: ExportJob, encoder) -> int:
    """Embed every input row and write one EMB1 file; returns the count."""
    records = []
    for spec in job.inputs:
        rows = _read_rows(spec)
        logger.info("embedding %d rows for task %s", len(rows), spec.task)
        texts = [text for _, text in rows]
        for start in range(0, len(texts), job.batch_size):
            batch_ids = rows[start : start + job.batch_size]
            vectors = encoder.encode(texts[start : start + job.batch_size])
            for (record_id, _), vector in zip(batch_ids, vectors):
                records.append((record_id, spec.task, vector))
    count = write_emb1(job.out_path, encoder.dim, records)
    logger.info("wrote %d records (dim %d) to %s", count, encoder.dim, job.out_path)
    return count


def embed_query(text: str, out_path: str | Path, encoder, record_id: str = "query") -> None:
    """Write a one-record EMB1 file for an ad-hoc query string."""
    vector = encoder.encode([text])[0]
    write_emb1(out_path, encoder.dim, [(record_id, "", vector)])
