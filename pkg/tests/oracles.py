"""Independent reference implementations the production code is checked against.

Everything here is deliberately written as plain Python loops with
math.fsum accumulation, sharing no code with the package internals.
"""

import math


def fsum_cosine_distance(q, v):
    """1 - <q, v> over explicitly renormalized vectors, exactly-rounded sums."""
    qn = math.sqrt(math.fsum(float(x) * float(x) for x in q))
    vn = math.sqrt(math.fsum(float(x) * float(x) for x in v))
    dot = math.fsum(float(a) / qn * (float(b) / vn) for a, b in zip(q, v))
    return max(1.0 - dot, 0.0)


def brute_force_scan(items, q, k):
    """Top-k ids by (distance, id) over a full scan; the retrieval ground truth."""
    scored = sorted((fsum_cosine_distance(q, item.vector), item.id) for item in items)
    return [item_id for _, item_id in scored[:k]]


def ties_reference(deltas, weights, density):
    """Step-by-step TIES: trim -> elect sign -> sign-matched weighted sum.

    deltas: list of 2-D lists/arrays (all the same shape); weights: list of
    floats; density in (0, 1]. Returns a nested list.
    """
    rows = len(deltas[0])
    cols = len(deltas[0][0])
    n = rows * cols

    # trim each delta to its top ceil(density*n) magnitudes, low index wins ties
    keep = math.ceil(density * n)
    trimmed = []
    for mat in deltas:
        flat = [float(mat[r][c]) for r in range(rows) for c in range(cols)]
        order = sorted(range(n), key=lambda i: (-abs(flat[i]), i))
        kept = set(order[:keep])
        trimmed.append([flat[i] if i in kept else 0.0 for i in range(n)])

    merged = [0.0] * n
    for i in range(n):
        pos = [t[i] for t in trimmed if t[i] > 0.0]
        neg = [t[i] for t in trimmed if t[i] < 0.0]
        if len(pos) > len(neg):
            sign = 1.0
        elif len(neg) > len(pos):
            sign = -1.0
        elif math.fsum(pos) > -math.fsum(neg):
            sign = 1.0
        elif -math.fsum(neg) > math.fsum(pos):
            sign = -1.0
        else:
            sign = 1.0
        total = 0.0
        for w, t in zip(weights, trimmed):
            if t[i] != 0.0 and (1.0 if t[i] > 0.0 else -1.0) == sign:
                total += w * t[i]
        merged[i] = total
    return [[merged[r * cols + c] for c in range(cols)] for r in range(rows)]
