"""Query neighbours -> task-weight distribution.

The chain is: map each neighbour's cosine distance to a similarity with
the temperature-free kernel exp(-d), sum similarities per task, normalize
to a probability vector, then keep the smallest top-mass prefix whose
cumulative mass reaches p (nucleus truncation) and renormalize inside it.

All accumulation uses math.fsum over 64-bit floats, which is exactly
rounded and therefore independent of neighbour order; combined with the
total (mass desc, task asc) sort order the whole chain is deterministic
under any permutation of its inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    EmptyNeighbourList,
    InvalidP,
    NegativeDistance,
    UnnormalizedInput,
)
from .index import Neighbour, VectorIndex

DEFAULT_K = 100
DEFAULT_P = 0.9

_SUM_TOL = 1e-9


@dataclass(frozen=True)
class TaskMass:
    task: str
    mass: float


@dataclass(frozen=True)
class TaskWeightDistribution:
    """Post-nucleus fusion weights: positive, sum to 1, descending order."""

    weights: dict[str, float]
    p_used: float
    nucleus_tasks: tuple[str, ...]

    def __post_init__(self):
        total = math.fsum(self.weights.values())
        if abs(total - 1.0) > _SUM_TOL:
            raise UnnormalizedInput(total)


def kernel(d: float) -> float:
    """Temperature-free similarity kernel exp(-d), in (0, 1] for d >= 0."""
    if d < 0.0:
        raise NegativeDistance(d)
    return math.exp(-d)


def aggregate(neighbours: list[Neighbour]) -> list[TaskMass]:
    """Sum kernel similarities per task and normalize to sum 1.

    Returns one TaskMass per distinct task, ordered by (mass desc,
    task asc). Neighbour order never affects the result.
    """
    if not neighbours:
        raise EmptyNeighbourList()
    per_task: dict[str, list[float]] = {}
    for nb in neighbours:
        per_task.setdefault(nb.task, []).append(kernel(nb.distance))
    sums = {task: math.fsum(values) for task, values in per_task.items()}
    total = math.fsum(sums.values())
    masses = [TaskMass(task=task, mass=s / total) for task, s in sums.items()]
    masses.sort(key=lambda tm: (-tm.mass, tm.task))
    return masses


def nucleus(masses: list[TaskMass], p: float) -> TaskWeightDistribution:
    """Keep the smallest top-mass prefix with cumulative mass >= p; renormalize.

    The prefix order is mass descending with ties broken by ascending task
    name, and the task that crosses the threshold is included.
    """
    if not 0.0 < p <= 1.0:
        raise InvalidP(p)
    total = math.fsum(tm.mass for tm in masses)
    if abs(total - 1.0) > _SUM_TOL:
        raise UnnormalizedInput(total)
    ranked = sorted(masses, key=lambda tm: (-tm.mass, tm.task))
    kept: list[TaskMass] = []
    for tm in ranked:
        kept.append(tm)
        if math.fsum(k.mass for k in kept) >= p:
            break
    denom = math.fsum(k.mass for k in kept)
    weights = {tm.task: tm.mass / denom for tm in kept}
    return TaskWeightDistribution(
        weights=weights,
        p_used=p,
        nucleus_tasks=tuple(tm.task for tm in kept),
    )


def task_weights(
    q: np.ndarray,
    index: VectorIndex,
    k: int = DEFAULT_K,
    p: float = DEFAULT_P,
) -> TaskWeightDistribution:
    """Full retrieval-to-weights chain for one query embedding."""
    neighbours = index.query(q, k)
    return nucleus(aggregate(neighbours), p)
