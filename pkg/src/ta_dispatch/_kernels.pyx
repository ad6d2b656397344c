# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled routing kernels; must agree bit-for-bit with ``_kernels_py``."""
import numpy as np
cimport numpy as cnp
from libc.stdlib cimport malloc, free, qsort

cnp.import_array()


ctypedef struct Entry:
    double score
    Py_ssize_t pos


cdef int _cmp_entry(const void* a, const void* b) noexcept nogil:
    cdef const Entry* x = <const Entry*>a
    cdef const Entry* y = <const Entry*>b
    if x.score > y.score:
        return -1
    if x.score < y.score:
        return 1
    if x.pos < y.pos:
        return -1
    if x.pos > y.pos:
        return 1
    return 0


def topk_select(probs, Py_ssize_t k):
    cdef double[:, ::1] p = np.ascontiguousarray(probs, dtype=np.float64)
    cdef Py_ssize_t T = p.shape[0], N = p.shape[1]
    if k > N:
        raise ValueError("k exceeds the number of experts")
    idx_arr = np.empty((T, k), dtype=np.int64)
    val_arr = np.empty((T, k), dtype=np.float64)
    cdef cnp.int64_t[:, ::1] idx = idx_arr
    cdef double[:, ::1] val = val_arr
    cdef unsigned char* taken = <unsigned char*>malloc(N)
    cdef Py_ssize_t t, j, e, best
    cdef double bestv
    if taken == NULL:
        raise MemoryError()
    try:
        with nogil:
            for t in range(T):
                for e in range(N):
                    taken[e] = 0
                for j in range(k):
                    best = -1
                    bestv = 0.0
                    for e in range(N):
                        if taken[e]:
                            continue
                        if best < 0 or p[t, e] > bestv:
                            best = e
                            bestv = p[t, e]
                    taken[best] = 1
                    idx[t, j] = best
                    val[t, j] = bestv
    finally:
        free(taken)
    return idx_arr, val_arr


def capacity_keep(bucket, score, capacity):
    cdef cnp.int64_t[::1] bk = np.ascontiguousarray(bucket, dtype=np.int64)
    cdef double[::1] sc = np.ascontiguousarray(score, dtype=np.float64)
    cdef cnp.int64_t[::1] cap = np.ascontiguousarray(capacity, dtype=np.int64)
    cdef Py_ssize_t n = bk.shape[0], B = cap.shape[0]
    keep_arr = np.ones(n, dtype=np.uint8)
    cdef unsigned char[::1] keep = keep_arr
    if n == 0:
        return keep_arr

    counts_arr = np.zeros(B, dtype=np.int64)
    cdef cnp.int64_t[::1] counts = counts_arr
    cdef Py_ssize_t a, b, overflow = 0
    for a in range(n):
        counts[bk[a]] += 1
    for b in range(B):
        if counts[b] > cap[b]:
            overflow = 1
    if not overflow:
        return keep_arr

    starts_arr = np.zeros(B + 1, dtype=np.int64)
    cdef cnp.int64_t[::1] starts = starts_arr
    for b in range(B):
        starts[b + 1] = starts[b] + counts[b]
    fill_arr = starts_arr[:B].copy()
    cdef cnp.int64_t[::1] fill = fill_arr
    cdef Entry* entries = <Entry*>malloc(n * sizeof(Entry))
    cdef Py_ssize_t lo, m, r
    if entries == NULL:
        raise MemoryError()
    try:
        with nogil:
            # counting sort by bucket keeps token order inside each bucket
            for a in range(n):
                b = bk[a]
                entries[fill[b]].score = sc[a]
                entries[fill[b]].pos = a
                fill[b] += 1
            for b in range(B):
                m = counts[b]
                if m <= cap[b]:
                    continue
                lo = starts[b]
                qsort(&entries[lo], m, sizeof(Entry), _cmp_entry)
                for r in range(cap[b] if cap[b] > 0 else 0, m):
                    keep[entries[lo + r].pos] = 0
    finally:
        free(entries)
    return keep_arr
