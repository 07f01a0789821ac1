"""Single command-line entry point: ingest, weights, merge, bench, inspect.

Exit codes are stable API: 0 ok, 1 usage or parse failure, 2 index
errors, 3 embedding errors, 4 adapter resolution, 5 merge math. All
randomness flows from --seed (default 42); identical inputs and seed
produce byte-identical outputs. Set LORAFUSE_LOG=DEBUG|INFO|... for
logging.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import adapters as adapters_mod
from . import bench as bench_mod
from .embed import (
    DEFAULT_DIM,
    HashingEmbedder,
    StoreProvider,
    load_embedding_store,
)
from .errors import (
    AdapterResolutionError,
    EmbeddingError,
    EmptyIndex,
    FormatError,
    IndexError_,
    InvalidConfig,
    InvalidDensity,
    InvalidP,
    LorafuseError,
    MissingColumn,
    NonFinite,
    RankMismatch,
    ShapeMismatch,
)
from .index import IndexedExample, VectorIndex
from .merge import DENSITY_DEFAULTS, MergeRequest, STRATEGIES, merge, save_merged
from .prng import derive_seed
from .textprep import DEFAULT_SAMPLE_CAP, TaskSpec, sample_per_task, unify_rows
from .weights import DEFAULT_K, DEFAULT_P, task_weights

logger = logging.getLogger("lorafuse")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INDEX = 2
EXIT_EMBEDDING = 3
EXIT_ADAPTERS = 4
EXIT_MERGE = 5


class _Parser(argparse.ArgumentParser):
    """argparse variant that exits 1 (not 2) on usage errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _atomic_write_text(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    tmp.replace(path)


def _load_json(path: Path) -> dict:
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise InvalidConfig(f"cannot parse {path}: {exc}") from exc


# --- ingest -----------------------------------------------------------------

def _task_spec_from_config(entry: dict) -> tuple[TaskSpec, Path]:
    try:
        spec = TaskSpec(
            task_name=entry["task_name"],
            hint=entry.get("hint", ""),
            text_columns=tuple(entry["text_columns"]),
            separator_labels=tuple(entry["separator_labels"]),
            label_columns=tuple(entry.get("label_columns", ())),
        )
        return spec, Path(entry["csv_path"])
    except KeyError as exc:
        raise InvalidConfig(f"ingest task entry lacks {exc}") from exc


def _provider_from_config(cfg: dict):
    kind = cfg.get("kind", "hashing")
    if kind == "hashing":
        return HashingEmbedder(dim=int(cfg.get("dim", DEFAULT_DIM)))
    if kind == "store":
        return StoreProvider(load_embedding_store(cfg["path"]))
    raise InvalidConfig(f"unknown provider kind {kind!r}")


def cmd_ingest(args) -> int:
    config = _load_json(Path(args.config))
    provider = _provider_from_config(config.get("provider", {}))
    cap = args.cap if args.cap is not None else int(config.get("sample_cap", DEFAULT_SAMPLE_CAP))
    entries = config.get("tasks", [])
    if not entries:
        raise InvalidConfig("ingest config declares no tasks")
    specs = [_task_spec_from_config(entry) for entry in entries]
    names = [spec.task_name for spec, _ in specs]
    if len(set(names)) != len(names):
        raise InvalidConfig("duplicate task_name in ingest config")

    index = VectorIndex(dim=provider.dim, chunk=args.chunk)
    for spec, csv_path in specs:
        with open(csv_path, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        flat = unify_rows(rows, spec)
        if not flat:
            logger.warning("task %s: empty CSV %s, ingesting 0 rows", spec.task_name, csv_path)
            print(f"warning: task {spec.task_name} has 0 rows", file=sys.stderr)
            continue
        sampled = sample_per_task(flat, cap=cap, seed=derive_seed(args.seed, spec.task_name))
        items = [
            IndexedExample(
                id=ex.id,
                task=ex.task,
                vector=provider.embed(ex.text, ex.id),
                text=ex.text,
            )
            for ex in sampled
        ]
        index.insert_batch(items)
        logger.info("task %s: ingested %d rows", spec.task_name, len(items))
    index.save(args.db)
    counts = index.task_counts()
    print(f"ingested {len(index)} vectors, dim {index.dim}, {len(counts)} task(s)")
    for task in sorted(counts):
        print(f"  {task}: {counts[task]}")
    return EXIT_OK


# --- weights ----------------------------------------------------------------

def _query_embedding(args, dim: int) -> np.ndarray:
    if args.query_embedding:
        store = load_embedding_store(args.query_embedding)
        if not store.entries:
            raise EmbeddingError(f"{args.query_embedding} holds no records")
        if store.dim != dim:
            raise EmbeddingError(f"query embedding dim {store.dim} != index dim {dim}")
        return next(iter(store.entries.values()))
    text = args.query
    if text.startswith("@"):
        text = Path(text[1:]).read_text(encoding="utf-8").strip()
    return HashingEmbedder(dim=dim).embed(text, "query")


def cmd_weights(args) -> int:
    db = Path(args.db)
    if not db.is_file():
        print(f"error: snapshot {db} does not exist", file=sys.stderr)
        return EXIT_INDEX
    try:
        index = VectorIndex.load(db, backend=args.backend)
    except FormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INDEX
    try:
        q = _query_embedding(args, index.dim)
    except (EmbeddingError, FormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_EMBEDDING
    if args.k < 1:
        raise InvalidConfig(f"k must be >= 1, got {args.k}")
    if not 0.0 < args.p <= 1.0:
        raise InvalidP(args.p)
    dist = task_weights(q, index, k=args.k, p=args.p)
    ranked = sorted(dist.weights.items(), key=lambda kv: (-kv[1], kv[0]))
    payload = {"weights": {task: w for task, w in ranked}, "p": args.p, "k": args.k}
    text = json.dumps(payload, indent=2) + "\n"
    if args.out:
        _atomic_write_text(Path(args.out), text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


# --- merge ------------------------------------------------------------------

def cmd_merge(args) -> int:
    weights_doc = _load_json(Path(args.weights))
    if "weights" not in weights_doc or not isinstance(weights_doc["weights"], dict):
        raise InvalidConfig(f"{args.weights} has no 'weights' object")
    weights = {str(t): float(w) for t, w in weights_doc["weights"].items()}
    adapters_root = Path(args.adapters)
    available = {t: adapters_root / t for t in weights if (adapters_root / t).is_dir()}
    missing = sorted(set(weights) - set(available))
    if missing:
        if not args.renormalize_missing:
            raise AdapterResolutionError(
                f"no adapter directory for weighted task(s) {missing} under {adapters_root} "
                "(pass --renormalize-missing to drop and renormalize)"
            )
        if not available:
            raise AdapterResolutionError(f"no adapters at all under {adapters_root}")
        kept_total = sum(weights[t] for t in available)
        weights = {t: weights[t] / kept_total for t in available}
        logger.warning("dropped weighted task(s) %s; renormalized over %s", missing, sorted(available))
    loaded = []
    digests = {}
    for task in sorted(available):
        try:
            adapter = adapters_mod.load_adapter(available[task])
        except LorafuseError as exc:
            raise AdapterResolutionError(f"cannot load adapter for {task!r}: {exc}") from exc
        if adapter.task != task:
            raise AdapterResolutionError(
                f"adapter under {available[task]} declares task {adapter.task!r}, expected {task!r}"
            )
        loaded.append(adapter)
        digests[task] = adapters_mod.adapter_digest(available[task])
    req = MergeRequest(
        adapters=loaded,
        weights=weights,
        strategy=args.strategy,
        density=args.density,
    )
    merged = merge(req)
    save_merged(merged, args.out, extra_provenance={"input_digests": digests})
    print(f"merged {len(loaded)} adapter(s) with strategy {args.strategy} -> {args.out}")
    return EXIT_OK


# --- bench ------------------------------------------------------------------

def cmd_bench(args) -> int:
    config = _load_json(Path(args.config))
    suite = bench_mod.generate_suite(
        n_tasks=int(config.get("n_tasks", 6)),
        n_families=int(config.get("n_families", 3)),
        examples_per_task=int(config.get("examples_per_task", 200)),
        dim=int(config.get("dim", 128)),
        rank=int(config.get("rank", 4)),
        seed=int(config.get("seed", args.seed)),
        delta_dim=int(config.get("delta_dim", 24)),
        vocab_size=int(config.get("vocab_size", 50)),
        tokens_per_example=int(config.get("tokens_per_example", 12)),
        family_overlap=float(config.get("family_overlap", 0.6)),
        global_overlap=float(config.get("global_overlap", 0.1)),
        noise_scale=float(config.get("noise_scale", 0.1)),
        alpha=float(config.get("alpha", 2.0)),
    )
    report = bench_mod.run_bench(
        suite,
        k=int(config.get("k", DEFAULT_K)),
        p=float(config.get("p", DEFAULT_P)),
        strategies=tuple(config.get("strategies", list(STRATEGIES))),
        densities=config.get("densities", dict(DENSITY_DEFAULTS)),
        n_queries=int(config.get("n_queries", 50)),
        held_out_task=config.get("held_out_task"),
    )
    _atomic_write_text(Path(args.out), report.to_json())
    if args.csv:
        _write_bench_csv(report, Path(args.csv))
    for key, value in report.runtimes.items():
        print(f"{key}: {value:.3f}s", file=sys.stderr)
    print(
        f"bench done: median in-family mass {report.summary['median_in_family_mass']:.4f}, "
        f"report -> {args.out}"
    )
    return EXIT_OK


def _write_bench_csv(report: bench_mod.BenchReport, path: Path) -> None:
    strategies = report.config["strategies"]
    header = ["query_index", "task", "family", "in_family_mass"]
    for s in strategies:
        header += [f"err_{s}", f"uniform_err_{s}"]
    lines = [",".join(header)]
    for row in report.queries:
        cells = [str(row["query_index"]), row["task"], row["family"], repr(row["in_family_mass"])]
        for s in strategies:
            cells += [repr(row["errors"][s]), repr(row["uniform_errors"][s])]
        lines.append(",".join(cells))
    _atomic_write_text(path, "\n".join(lines) + "\n")


# --- inspect ----------------------------------------------------------------

def cmd_inspect(args) -> int:
    path = Path(args.path)
    if path.is_dir():
        manifest = path / "manifest.json"
        if not manifest.is_file():
            raise InvalidConfig(f"{path} is a directory without manifest.json")
        doc = _load_json(manifest)
        print(json.dumps(doc, indent=2, sort_keys=True))
        return EXIT_OK
    if not path.is_file():
        print(f"error: {path} does not exist", file=sys.stderr)
        return EXIT_USAGE
    head = path.open("rb").read(4)
    if head == b"LFIX":
        index = VectorIndex.load(path)
        counts = index.task_counts()
        print(f"LFIX snapshot: {len(index)} records, dim {index.dim}")
        for task in sorted(counts):
            print(f"  {task}: {counts[task]}")
    elif head == b"EMB1":
        store = load_embedding_store(path)
        tasks = sorted(set(store.tasks.values()))
        print(f"EMB1 store: {len(store)} records, dim {store.dim}, tasks: {', '.join(tasks) or '-'}")
    else:
        doc = _load_json(path)
        print(json.dumps(doc, indent=2, sort_keys=True))
    return EXIT_OK


# --- wiring -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lorafuse", description=__doc__)
    parser.add_argument("--seed", type=int, default=42, help="master seed (default 42)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="build an index snapshot from task CSVs")
    p.add_argument("--config", required=True, help="ingest config JSON")
    p.add_argument("--db", required=True, help="output snapshot path (.lfix)")
    p.add_argument("--cap", type=int, default=None, help="per-task sample cap (default 2000)")
    p.add_argument("--chunk", type=int, default=4000, help="insert chunk size (default 4000)")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("weights", help="compute a task-weight distribution for a query")
    p.add_argument("--db", required=True)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--query", help="query text, or @file to read it from a file")
    group.add_argument("--query-embedding", help="EMB1 file with the query vector")
    p.add_argument("--k", type=int, default=DEFAULT_K)
    p.add_argument("--p", type=float, default=DEFAULT_P)
    p.add_argument("--backend", choices=("exact", "hnsw"), default="exact")
    p.add_argument("--out", help="output JSON path (stdout when omitted)")
    p.set_defaults(func=cmd_weights)

    p = sub.add_parser("merge", help="merge adapters under a weight distribution")
    p.add_argument("--strategy", required=True, choices=STRATEGIES)
    p.add_argument("--weights", required=True, help="weights JSON from the weights command")
    p.add_argument("--adapters", required=True, help="directory with one adapter subdir per task")
    p.add_argument("--density", type=float, default=None, help="density for ties/magnitude_prune")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--renormalize-missing", action="store_true")
    p.set_defaults(func=cmd_merge)

    p = sub.add_parser("bench", help="run the synthetic end-to-end benchmark")
    p.add_argument("--config", required=True, help="bench config JSON")
    p.add_argument("--out", required=True, help="report JSON path")
    p.add_argument("--csv", help="optional per-query CSV summary")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("inspect", help="print a snapshot, store, or manifest summary")
    p.add_argument("path")
    p.set_defaults(func=cmd_inspect)
    return parser


def _exit_code_for(exc: LorafuseError) -> int:
    if isinstance(exc, (EmptyIndex, IndexError_)):
        return EXIT_INDEX
    if isinstance(exc, EmbeddingError):
        return EXIT_EMBEDDING
    if isinstance(exc, AdapterResolutionError):
        return EXIT_ADAPTERS
    if isinstance(exc, (ShapeMismatch, RankMismatch, InvalidDensity, NonFinite)):
        return EXIT_MERGE
    if isinstance(exc, (InvalidConfig, InvalidP, MissingColumn, FormatError)):
        return EXIT_USAGE
    return EXIT_USAGE


def main(argv: list[str] | None = None) -> int:
    level = os.environ.get("LORAFUSE_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except LorafuseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _exit_code_for(exc)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
