"""Four fusion strategies over a weighted set of low-rank adapters.

Given fusion weights w_t (one per adapter task, summing to 1):

* linear — A_m = sum_i sqrt(w_i * alpha_i) * A_i and likewise for B;
  stays low-rank, requires equal ranks.
* cat — A_m = concat_i(w_i * alpha_i * A_i) along the rank axis,
  B_m = concat_i(B_i); the product B_m @ A_m equals
  sum_i w_i * alpha_i * B_i @ A_i exactly, with effective rank sum r_i.
* ties — per dense delta: trim each to its top ceil(density * n) entries
  by magnitude, elect a majority sign per element by frequency (zeros
  abstain; count ties fall to the larger magnitude-sum side, then +1),
  and sum w_i * trimmed_i over entries whose sign matches the vote.
* magnitude_prune — weighted-sum delta masked to its top
  ceil(density * n) magnitudes.

Trim/prune ties at the density boundary keep the lower flat index. All
accumulation runs in float64 and iterates adapters in ascending task
order, so permuting the request's adapter list never changes a result.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .adapters import LoraAdapter, LoraMatrixPair, MergedDelta, delta
from .errors import InvalidConfig, InvalidDensity, RankMismatch, ShapeMismatch
from .weights import TaskWeightDistribution

STRATEGIES = ("linear", "cat", "ties", "magnitude_prune")

DENSITY_DEFAULTS = {"ties": 0.5, "magnitude_prune": 0.75}

_WEIGHT_SUM_TOL = 1e-6


@dataclass
class MergeRequest:
    """One merge job: adapters, their task weights, a strategy, a density."""

    adapters: list[LoraAdapter]
    weights: dict[str, float]
    strategy: str
    density: float | None = None
    majority_sign_method: str = "frequency"

    def __post_init__(self):
        if isinstance(self.weights, TaskWeightDistribution):
            self.weights = dict(self.weights.weights)
        if self.strategy not in STRATEGIES:
            raise InvalidConfig(f"unknown strategy {self.strategy!r}; expected one of {STRATEGIES}")
        if self.majority_sign_method != "frequency":
            raise InvalidConfig(f"unsupported majority_sign_method {self.majority_sign_method!r}")
        if not self.adapters:
            raise InvalidConfig("merge request needs at least one adapter")
        tasks = [a.task for a in self.adapters]
        if len(set(tasks)) != len(tasks):
            raise InvalidConfig("merge request has two adapters for the same task")
        missing = [t for t in tasks if t not in self.weights]
        if missing:
            raise InvalidConfig(f"no fusion weight for task(s) {missing}")
        total = math.fsum(self.weights[t] for t in tasks)
        if abs(total - 1.0) > _WEIGHT_SUM_TOL:
            raise InvalidConfig(f"fusion weights over the adapters sum to {total!r}, not 1")
        if self.density is None:
            self.density = DENSITY_DEFAULTS.get(self.strategy)
        if self.density is not None and not 0.0 < self.density <= 1.0:
            raise InvalidDensity(self.density)

    def ordered(self) -> list[tuple[float, LoraAdapter]]:
        """(weight, adapter) pairs in canonical ascending-task order."""
        ranked = sorted(self.adapters, key=lambda a: a.task)
        return [(float(self.weights[a.task]), a) for a in ranked]


def _common_modules(adapters: list[LoraAdapter]) -> list[str]:
    module_sets = [set(a.pairs) for a in adapters]
    first = module_sets[0]
    for other, adapter in zip(module_sets[1:], adapters[1:]):
        if other != first:
            raise ShapeMismatch(
                f"adapter {adapter.name!r} targets modules {sorted(other)}, "
                f"expected {sorted(first)}"
            )
    return sorted(first)


def _provenance(req: MergeRequest) -> dict:
    return {
        "strategy": req.strategy,
        "weights": {a.task: float(req.weights[a.task]) for _, a in req.ordered()},
        "density": req.density,
        "adapters": [a.name for _, a in req.ordered()],
    }


def merge_linear(req: MergeRequest) -> MergedDelta:
    """Weighted sum of factors with sqrt(w_i * alpha_i) coefficients."""
    ordered = req.ordered()
    ranks = {a.rank for _, a in ordered}
    if len(ranks) != 1:
        raise RankMismatch(f"linear merge requires one shared rank, got {sorted(ranks)}")
    modules = _common_modules([a for _, a in ordered])
    pairs: dict[str, LoraMatrixPair] = {}
    for module in modules:
        ref = ordered[0][1].pairs[module]
        a_sum = np.zeros(ref.A.shape, dtype=np.float64)
        b_sum = np.zeros(ref.B.shape, dtype=np.float64)
        for w, adapter in ordered:
            pair = adapter.pairs[module]
            if pair.A.shape != ref.A.shape or pair.B.shape != ref.B.shape:
                raise ShapeMismatch(
                    f"{module}: {adapter.name!r} has shapes {pair.A.shape}/{pair.B.shape}, "
                    f"expected {ref.A.shape}/{ref.B.shape}"
                )
            coeff = math.sqrt(w * adapter.alpha)
            a_sum += coeff * pair.A.astype(np.float64)
            b_sum += coeff * pair.B.astype(np.float64)
        pairs[module] = LoraMatrixPair(A=a_sum, B=b_sum, rank=ref.rank, target_module=module)
    return MergedDelta(
        kind="low_rank",
        low_rank=pairs,
        effective_rank=ordered[0][1].rank,
        provenance=_provenance(req),
    )


def merge_cat(req: MergeRequest) -> MergedDelta:
    """Rank-axis concatenation; B_m @ A_m == sum_i w_i alpha_i B_i A_i."""
    ordered = req.ordered()
    modules = _common_modules([a for _, a in ordered])
    total_rank = sum(a.rank for _, a in ordered)
    pairs: dict[str, LoraMatrixPair] = {}
    for module in modules:
        ref = ordered[0][1].pairs[module]
        a_blocks, b_blocks = [], []
        for w, adapter in ordered:
            pair = adapter.pairs[module]
            if pair.d_in != ref.d_in or pair.d_out != ref.d_out:
                raise ShapeMismatch(
                    f"{module}: {adapter.name!r} is {pair.d_out}x{pair.d_in}, "
                    f"expected {ref.d_out}x{ref.d_in}"
                )
            a_blocks.append(w * adapter.alpha * pair.A.astype(np.float64))
            b_blocks.append(pair.B.astype(np.float64))
        pairs[module] = LoraMatrixPair(
            A=np.concatenate(a_blocks, axis=0),
            B=np.concatenate(b_blocks, axis=1),
            rank=total_rank,
            target_module=module,
        )
    return MergedDelta(
        kind="low_rank",
        low_rank=pairs,
        effective_rank=total_rank,
        provenance=_provenance(req),
    )


def _top_magnitude_mask(flat: np.ndarray, density: float) -> np.ndarray:
    """Boolean mask keeping the ceil(density * n) largest |values|.

    Equal magnitudes at the boundary keep the lower flat index.
    """
    n = flat.size
    keep = math.ceil(density * n)
    order = np.lexsort((np.arange(n), -np.abs(flat)))
    mask = np.zeros(n, dtype=bool)
    mask[order[:keep]] = True
    return mask


def trim(matrix: np.ndarray, density: float) -> np.ndarray:
    """Zero all but the top ceil(density * n) entries of |matrix|."""
    if not 0.0 < density <= 1.0:
        raise InvalidDensity(density)
    flat = matrix.reshape(-1)
    return np.where(_top_magnitude_mask(flat, density), flat, 0.0).reshape(matrix.shape)


def elect_majority_sign(trimmed: list[np.ndarray]) -> np.ndarray:
    """Per-element majority sign by frequency over nonzero entries.

    Zeros abstain. A count tie goes to the side with the larger summed
    magnitude; a full tie elects +1.
    """
    pos_count = np.zeros(trimmed[0].shape, dtype=np.int64)
    neg_count = np.zeros_like(pos_count)
    pos_mag = np.zeros(trimmed[0].shape, dtype=np.float64)
    neg_mag = np.zeros_like(pos_mag)
    for t in trimmed:
        pos = t > 0
        neg = t < 0
        pos_count += pos
        neg_count += neg
        pos_mag += np.where(pos, t, 0.0)
        neg_mag += np.where(neg, -t, 0.0)
    sign = np.where(
        pos_count > neg_count,
        1.0,
        np.where(
            neg_count > pos_count,
            -1.0,
            np.where(pos_mag > neg_mag, 1.0, np.where(neg_mag > pos_mag, -1.0, 1.0)),
        ),
    )
    return sign


def _dense_deltas(ordered: list[tuple[float, LoraAdapter]], module: str) -> list[np.ndarray]:
    ref = ordered[0][1].pairs[module]
    deltas = []
    for _, adapter in ordered:
        pair = adapter.pairs[module]
        d = delta(pair, adapter.alpha)
        if d.shape != (ref.d_out, ref.d_in):
            raise ShapeMismatch(
                f"{module}: delta of {adapter.name!r} is {d.shape}, "
                f"expected {(ref.d_out, ref.d_in)}"
            )
        deltas.append(d)
    return deltas


def merge_ties(req: MergeRequest) -> MergedDelta:
    """Trim -> elect sign -> sign-consistent weighted sum, per module."""
    ordered = req.ordered()
    modules = _common_modules([a for _, a in ordered])
    dense: dict[str, np.ndarray] = {}
    for module in modules:
        deltas = _dense_deltas(ordered, module)
        trimmed = [trim(d, req.density) for d in deltas]
        majority = elect_majority_sign(trimmed)
        merged = np.zeros_like(trimmed[0])
        for (w, _), t in zip(ordered, trimmed):
            merged += w * np.where(np.sign(t) == majority, t, 0.0)
        dense[module] = merged
    return MergedDelta(kind="dense", dense=dense, provenance=_provenance(req))


def merge_magnitude_prune(req: MergeRequest) -> MergedDelta:
    """Weighted-sum delta masked to its top ceil(density * n) magnitudes."""
    ordered = req.ordered()
    modules = _common_modules([a for _, a in ordered])
    dense: dict[str, np.ndarray] = {}
    for module in modules:
        deltas = _dense_deltas(ordered, module)
        raw = np.zeros_like(deltas[0])
        for (w, _), d in zip(ordered, deltas):
            raw += w * d
        flat = raw.reshape(-1)
        mask = _top_magnitude_mask(flat, req.density)
        dense[module] = np.where(mask, flat, 0.0).reshape(raw.shape)
    return MergedDelta(kind="dense", dense=dense, provenance=_provenance(req))


_DISPATCH = {
    "linear": merge_linear,
    "cat": merge_cat,
    "ties": merge_ties,
    "magnitude_prune": merge_magnitude_prune,
}


def merge(req: MergeRequest) -> MergedDelta:
    """Dispatch on the request's strategy."""
    return _DISPATCH[req.strategy](req)


def save_merged(merged: MergedDelta, directory: str | Path, extra_provenance: dict | None = None) -> None:
    """Write a merged delta directory.

    Low-rank results reuse the adapter tensor layout ({module}.A.bin /
    {module}.B.bin, float32); dense results write {module}.delta.bin.
    The manifest carries the merge provenance block.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    provenance = dict(merged.provenance)
    if extra_provenance:
        provenance.update(extra_provenance)
    modules: dict[str, dict] = {}
    if merged.kind == "low_rank":
        for module in sorted(merged.low_rank):
            pair = merged.low_rank[module]
            (directory / f"{module}.A.bin").write_bytes(
                np.ascontiguousarray(pair.A, dtype="<f4").tobytes()
            )
            (directory / f"{module}.B.bin").write_bytes(
                np.ascontiguousarray(pair.B, dtype="<f4").tobytes()
            )
            modules[module] = {"d_out": pair.d_out, "d_in": pair.d_in}
        manifest = {
            "kind": "low_rank",
            "effective_rank": merged.effective_rank,
            "alpha": 1.0,  # scaling is already folded into the factors
            "modules": modules,
            "provenance": provenance,
        }
    else:
        for module in sorted(merged.dense):
            dw = merged.dense[module]
            (directory / f"{module}.delta.bin").write_bytes(
                np.ascontiguousarray(dw, dtype="<f4").tobytes()
            )
            modules[module] = {"d_out": int(dw.shape[0]), "d_in": int(dw.shape[1])}
        manifest = {
            "kind": "dense",
            "modules": modules,
            "provenance": provenance,
        }
    (directory / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
