"""Synthetic end-to-end harness: corpora + ground-truth deltas -> pipeline scores.

A suite holds n_tasks grouped into n_families. Task vocabularies share a
global token pool (cross-family overlap), a family pool (within-family
overlap) and task-specific tokens; example texts are fixed-length token
draws. Each task also gets a ground-truth low-rank delta built from a
family-shared subspace plus task noise, so "the right adapters to fuse"
is known by construction.

run_bench ingests every corpus through the hashing embedder, then for a
set of held-out (unseen) query texts compares retrieval-weighted merges
against uniform-weight merges. The per-strategy reference is the same
strategy applied to the query family's adapters with uniform in-family
weights; the reported error is the Frobenius distance to that reference.

Everything derives from one seed; serialized reports are byte-identical
across runs (wall-clock runtimes live only on the in-memory report).
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from statistics import median

import numpy as np

from .adapters import LoraAdapter, LoraMatrixPair
from .embed import HashingEmbedder
from .errors import InvalidConfig
from .index import IndexedExample, VectorIndex
from .merge import MergeRequest, merge
from .prng import SplitMix64, derive_seed
from .textprep import FlatExample
from .weights import task_weights

TARGET_MODULE = "proj"


@dataclass(frozen=True)
class SyntheticTask:
    name: str
    family: str
    vocab: tuple[str, ...]
    true_pair: LoraMatrixPair
    alpha: float


@dataclass
class SyntheticSuite:
    tasks: list[SyntheticTask]
    corpora: dict[str, list[FlatExample]]
    config: dict

    def families(self) -> dict[str, list[str]]:
        out: dict[str, list[str]] = {}
        for task in self.tasks:
            out.setdefault(task.family, []).append(task.name)
        return out

    def adapters(self, exclude: str | None = None) -> dict[str, LoraAdapter]:
        out = {}
        for task in self.tasks:
            if task.name == exclude:
                continue
            out[task.name] = LoraAdapter(
                name=f"synth-{task.name}",
                task=task.name,
                alpha=task.alpha,
                pairs={TARGET_MODULE: task.true_pair},
            )
        return out


@dataclass
class BenchReport:
    config: dict
    queries: list[dict]
    summary: dict
    runtimes: dict = field(default_factory=dict)

    def to_json(self) -> str:
        """Deterministic serialization; runtimes are deliberately excluded."""
        payload = {"config": self.config, "queries": self.queries, "summary": self.summary}
        return json.dumps(payload, sort_keys=True, separators=(",", ":")) + "\n"


def _sample_text(rng: SplitMix64, vocab: tuple[str, ...], length: int) -> str:
    return " ".join(vocab[rng.next_below(len(vocab))] for _ in range(length))


def generate_suite(
    n_tasks: int,
    n_families: int,
    examples_per_task: int,
    dim: int = 128,
    rank: int = 4,
    seed: int = 7,
    delta_dim: int = 24,
    vocab_size: int = 50,
    tokens_per_example: int = 12,
    family_overlap: float = 0.6,
    global_overlap: float = 0.1,
    noise_scale: float = 0.1,
    alpha: float = 2.0,
) -> SyntheticSuite:
    """Deterministic synthetic suite; same seed twice yields identical suites."""
    if n_families > n_tasks:
        raise InvalidConfig(f"n_families ({n_families}) exceeds n_tasks ({n_tasks})")
    if not 0.0 <= global_overlap <= family_overlap <= 1.0:
        raise InvalidConfig("need 0 <= global_overlap <= family_overlap <= 1")
    n_global = round(global_overlap * vocab_size)
    n_family = round((family_overlap - global_overlap) * vocab_size)
    n_specific = vocab_size - n_global - n_family
    global_pool = tuple(f"gw{i}" for i in range(n_global))
    gauss = np.random.default_rng(derive_seed(seed, "deltas"))
    family_basis = {}
    for fi in range(n_families):
        family_basis[f"family{fi}"] = (
            gauss.standard_normal((delta_dim, rank)),
            gauss.standard_normal((rank, delta_dim)),
        )
    tasks: list[SyntheticTask] = []
    corpora: dict[str, list[FlatExample]] = {}
    for ti in range(n_tasks):
        fi = ti % n_families
        family = f"family{fi}"
        name = f"task{ti}"
        vocab = (
            global_pool
            + tuple(f"fw{fi}_{i}" for i in range(n_family))
            + tuple(f"tw{ti}_{i}" for i in range(n_specific))
        )
        basis_b, basis_a = family_basis[family]
        pair = LoraMatrixPair(
            A=(basis_a + noise_scale * gauss.standard_normal((rank, delta_dim))).astype(np.float32),
            B=(basis_b + noise_scale * gauss.standard_normal((delta_dim, rank))).astype(np.float32),
            rank=rank,
            target_module=TARGET_MODULE,
        )
        tasks.append(SyntheticTask(name=name, family=family, vocab=vocab, true_pair=pair, alpha=alpha))
        text_rng = SplitMix64(derive_seed(seed, f"corpus:{name}"))
        corpora[name] = [
            FlatExample(id=f"{name}:{i}", text=_sample_text(text_rng, vocab, tokens_per_example), task=name)
            for i in range(examples_per_task)
        ]
    config = {
        "n_tasks": n_tasks,
        "n_families": n_families,
        "examples_per_task": examples_per_task,
        "dim": dim,
        "rank": rank,
        "seed": seed,
        "delta_dim": delta_dim,
        "vocab_size": vocab_size,
        "tokens_per_example": tokens_per_example,
        "family_overlap": family_overlap,
        "global_overlap": global_overlap,
        "noise_scale": noise_scale,
        "alpha": alpha,
    }
    return SyntheticSuite(tasks=tasks, corpora=corpora, config=config)


def build_index(suite: SyntheticSuite, exclude_task: str | None = None) -> VectorIndex:
    embedder = HashingEmbedder(dim=suite.config["dim"])
    index = VectorIndex(dim=suite.config["dim"])
    items = []
    for task in suite.tasks:
        if task.name == exclude_task:
            continue
        for example in suite.corpora[task.name]:
            items.append(
                IndexedExample(
                    id=example.id,
                    task=example.task,
                    vector=embedder.embed(example.text, example.id),
                    text=example.text,
                )
            )
    index.insert_batch(items)
    index.freeze()
    return index


def _frobenius(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.linalg.norm(a - b))


def run_bench(
    suite: SyntheticSuite,
    k: int = 100,
    p: float = 0.9,
    strategies: tuple[str, ...] = ("linear", "cat", "ties", "magnitude_prune"),
    densities: dict[str, float] | None = None,
    n_queries: int = 50,
    held_out_task: str | None = None,
) -> BenchReport:
    """Score retrieval-weighted vs uniform-weight merges on unseen queries.

    With held_out_task set, that task's corpus and adapter leave the pool
    and every query is drawn from it (zero-shot composition); otherwise
    queries rotate over all tasks. Never mutates the suite.
    """
    densities = densities or {}
    t0 = time.perf_counter()
    index = build_index(suite, exclude_task=held_out_task)
    t_index = time.perf_counter() - t0
    embedder = HashingEmbedder(dim=suite.config["dim"])
    adapters = suite.adapters(exclude=held_out_task)
    families = suite.families()
    task_family = {task.name: task.family for task in suite.tasks}
    uniform = {name: 1.0 / len(adapters) for name in adapters}
    # make the uniform weights fsum to exactly 1 despite division rounding
    names = sorted(uniform)
    uniform[names[-1]] = 1.0 - sum(uniform[n] for n in names[:-1])

    query_tasks = [t.name for t in suite.tasks if held_out_task is None or t.name == held_out_task]
    seed = suite.config["seed"]
    t0 = time.perf_counter()
    query_rows = []
    for qi in range(n_queries):
        qtask = query_tasks[qi % len(query_tasks)]
        vocab = next(t.vocab for t in suite.tasks if t.name == qtask)
        rng = SplitMix64(derive_seed(seed, f"query:{qtask}:{qi}"))
        text = _sample_text(rng, vocab, suite.config["tokens_per_example"])
        q = embedder.embed(text, f"query:{qi}")
        dist = task_weights(q, index, k=k, p=p)
        family = task_family[qtask]
        in_family = sum(w for t, w in dist.weights.items() if task_family[t] == family)
        family_members = [t for t in families[family] if t in adapters]
        fam_uniform = {t: 1.0 / len(family_members) for t in family_members}
        fam_uniform[sorted(fam_uniform)[-1]] = 1.0 - sum(
            fam_uniform[t] for t in sorted(fam_uniform)[:-1]
        )
        errors: dict[str, float] = {}
        uniform_errors: dict[str, float] = {}
        for strategy in strategies:
            density = densities.get(strategy)
            reference = merge(
                MergeRequest(
                    adapters=[adapters[t] for t in family_members],
                    weights=fam_uniform,
                    strategy=strategy,
                    density=density,
                )
            ).delta_for(TARGET_MODULE)
            merged_retr = merge(
                MergeRequest(
                    adapters=[adapters[t] for t in dist.weights],
                    weights=dict(dist.weights),
                    strategy=strategy,
                    density=density,
                )
            ).delta_for(TARGET_MODULE)
            merged_unif = merge(
                MergeRequest(
                    adapters=list(adapters.values()),
                    weights=uniform,
                    strategy=strategy,
                    density=density,
                )
            ).delta_for(TARGET_MODULE)
            errors[strategy] = _frobenius(merged_retr, reference)
            uniform_errors[strategy] = _frobenius(merged_unif, reference)
        query_rows.append(
            {
                "query_index": qi,
                "task": qtask,
                "family": family,
                "text": text,
                "weights": {t: dist.weights[t] for t in sorted(dist.weights)},
                "in_family_mass": in_family,
                "errors": errors,
                "uniform_errors": uniform_errors,
            }
        )
    t_queries = time.perf_counter() - t0

    masses = [row["in_family_mass"] for row in query_rows]
    summary = {
        "n_queries": n_queries,
        "held_out_task": held_out_task,
        "median_in_family_mass": median(masses),
        "mean_in_family_mass": sum(masses) / len(masses),
        "median_error": {
            s: median(row["errors"][s] for row in query_rows) for s in strategies
        },
        "median_uniform_error": {
            s: median(row["uniform_errors"][s] for row in query_rows) for s in strategies
        },
    }
    report_config = dict(suite.config)
    report_config.update({"k": k, "p": p, "strategies": list(strategies), "densities": densities})
    return BenchReport(
        config=report_config,
        queries=query_rows,
        summary=summary,
        runtimes={"index_build_s": t_index, "query_loop_s": t_queries},
    )
