"""Retrieval-weighted LoRA adapter fusion.

Text queries become task-weight distributions by cosine retrieval over a
task-labelled vector index (exp(-distance) kernel, per-task aggregation,
nucleus truncation), and those weights drive four low-rank adapter merge
strategies: linear, cat, ties, magnitude_prune.
"""

from .adapters import LoraAdapter, LoraMatrixPair, MergedDelta, delta, load_adapter, save_adapter
from .embed import EmbeddingStore, HashingEmbedder, StoreProvider, embed_text, load_embedding_store, save_embedding_store
from .index import IndexedExample, Neighbour, VectorIndex
from .merge import MergeRequest, merge, merge_cat, merge_linear, merge_magnitude_prune, merge_ties
from .textprep import FlatExample, TaskSpec, sample_per_task, unify_row, unify_rows
from .weights import TaskMass, TaskWeightDistribution, aggregate, kernel, nucleus, task_weights

__version__ = "0.1.0"

__all__ = [
    "EmbeddingStore",
    "FlatExample",
    "HashingEmbedder",
    "IndexedExample",
    "LoraAdapter",
    "LoraMatrixPair",
    "MergeRequest",
    "MergedDelta",
    "Neighbour",
    "StoreProvider",
    "TaskMass",
    "TaskSpec",
    "TaskWeightDistribution",
    "VectorIndex",
    "aggregate",
    "delta",
    "embed_text",
    "kernel",
    "load_adapter",
    "load_embedding_store",
    "merge",
    "merge_cat",
    "merge_linear",
    "merge_magnitude_prune",
    "merge_ties",
    "nucleus",
    "sample_per_task",
    "save_adapter",
    "save_embedding_store",
    "task_weights",
    "unify_row",
    "unify_rows",
]
