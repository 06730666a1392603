"""Deterministic reductions with a fixed pairwise tree.

Sums are combined over a binary tree whose shape depends only on the array
length, never on how the work is distributed.  A worker count only decides
which subtrees are evaluated concurrently; the combination order is fixed, so
the result is bit-identical for any number of workers.  ``tree_max`` and
``tree_min`` are exact under any evaluation order and are routed through
numpy directly.
"""

from concurrent.futures import ThreadPoolExecutor

import numpy as np

# Below this size the leaf is handed to numpy's sequential reducer.
_LEAF = 64


def _sum_range(a: np.ndarray, lo: int, hi: int) -> float:
    if hi - lo <= _LEAF:
        return float(np.add.reduce(a[lo:hi]))
    mid = lo + (hi - lo) // 2
    return _sum_range(a, lo, mid) + _sum_range(a, mid, hi)


def _split_points(n: int, levels: int) -> list:
    # First `levels` levels of the same midpoint recursion used by _sum_range.
    spans = [(0, n)]
    for _ in range(levels):
        nxt = []
        for lo, hi in spans:
            if hi - lo <= _LEAF:
                nxt.append((lo, hi))
            else:
                mid = lo + (hi - lo) // 2
                nxt.append((lo, mid))
                nxt.append((mid, hi))
        spans = nxt
    return spans


def tree_sum(values: np.ndarray, workers: int = 1) -> float:
    """Pairwise sum of ``values`` with a shape-fixed reduction tree."""
    a = np.ascontiguousarray(values, dtype=np.float64).ravel()
    if a.size == 0:
        return 0.0
    if workers <= 1:
        return _sum_range(a, 0, a.size)
    levels = max(1, int(np.ceil(np.log2(workers))))
    spans = _split_points(a.size, levels)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        partials = list(pool.map(lambda s: _sum_range(a, s[0], s[1]), spans))
    # Combine partials exactly as the sequential recursion would.
    while len(partials) > 1:
        combined = []
        i = 0
        while i < len(partials):
            if i + 1 < len(partials):
                combined.append(partials[i] + partials[i + 1])
                i += 2
            else:
                combined.append(partials[i])
                i += 1
        partials = combined
    return partials[0]


def tree_mean(values: np.ndarray, workers: int = 1) -> float:
    a = np.asarray(values)
    return tree_sum(a, workers=workers) / a.size


def tree_max(values: np.ndarray, workers: int = 1) -> float:
    # max is exactly associative and commutative; any tree gives the same bits
    return float(np.max(values))


def tree_min(values: np.ndarray, workers: int = 1) -> float:
    return float(np.min(values))
