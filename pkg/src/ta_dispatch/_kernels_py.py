"""Pure numpy routing kernels; reference behaviour for the compiled module."""
from __future__ import annotations

import numpy as np


def topk_select(probs: np.ndarray, k: int):
    """Indices and values of the ``k`` largest entries per row.

    Descending by value; equal values keep the lower expert index first.
    """
    probs = np.ascontiguousarray(probs, dtype=np.float64)
    order = np.argsort(-probs, axis=1, kind="stable")[:, :k]
    return order.astype(np.int64), np.take_along_axis(probs, order, axis=1)


def capacity_keep(bucket: np.ndarray, score: np.ndarray, capacity: np.ndarray) -> np.ndarray:
    """Keep mask for assignments under per-bucket capacities.

    Within each bucket, higher score wins; equal scores keep the earlier
    position. ``bucket`` and ``score`` list assignments in token order.
    """
    bucket = np.asarray(bucket, dtype=np.int64)
    score = np.asarray(score, dtype=np.float64)
    capacity = np.asarray(capacity, dtype=np.int64)
    n = bucket.size
    if n == 0:
        return np.zeros(0, dtype=np.uint8)
    counts = np.bincount(bucket, minlength=capacity.size)
    if np.all(counts <= capacity):
        return np.ones(n, dtype=np.uint8)
    order = np.lexsort((np.arange(n), -score, bucket))
    starts = np.concatenate(([0], np.cumsum(counts)[:-1]))
    rank = np.empty(n, dtype=np.int64)
    rank[order] = np.arange(n) - starts[bucket[order]]
    return (rank < capacity[bucket]).astype(np.uint8)
