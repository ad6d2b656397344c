"""Compare the compiled routing kernels against the numpy fallback.

    python benchmarks/bench_kernels.py --tokens 65536 --experts 64 --k 2

Prints best-of-``--repeat`` wall time per call for each kernel and backend,
plus the speedup. Exits 1 if the extension is not built.
"""
import argparse
import sys
import timeit

import numpy as np

from ta_dispatch import _kernels_py, gate, kernels

try:
    from ta_dispatch import _kernels as _kernels_c
except ImportError:
    _kernels_c = None


def _best(fn, repeat, number):
    return min(timeit.repeat(fn, repeat=repeat, number=number)) / number


def _route_with(impl, probs, k, policy):
    saved = kernels.topk_select, kernels.capacity_keep
    kernels.topk_select, kernels.capacity_keep = impl.topk_select, impl.capacity_keep
    try:
        return gate.topk_route(probs, k, policy)
    finally:
        kernels.topk_select, kernels.capacity_keep = saved


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--tokens", type=int, default=65536, help="tokens per call (P*S)")
    ap.add_argument("--experts", type=int, default=64)
    ap.add_argument("--k", type=int, default=2)
    ap.add_argument("--processes", type=int, default=8)
    ap.add_argument("--capacity-factor", type=float, default=1.0)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--number", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    if _kernels_c is None:
        print("compiled extension not built; run `pip install -e . --no-build-isolation`")
        return 1

    rng = np.random.default_rng(args.seed)
    T, N, k, P = args.tokens, args.experts, args.k, args.processes
    # skewed logits so capacity actually bites
    logits = rng.standard_normal((T, N)) + np.linspace(0.0, 2.0, N)
    probs = gate.softmax(logits)
    idx, val = _kernels_py.topk_select(probs, k)
    cap_each = int(np.ceil(args.capacity_factor * T * k / N))
    bucket = idx.ravel().astype(np.int64)
    score = val.ravel()
    cap = np.full(N, cap_each, dtype=np.int64)
    policy = gate.CapacityPolicy("global", args.capacity_factor)
    probs3 = probs.reshape(P, T // P, N)

    cases = {
        "topk_select": lambda impl: (lambda: impl.topk_select(probs, k)),
        "capacity_keep": lambda impl: (lambda: impl.capacity_keep(bucket, score, cap)),
        "topk_route": lambda impl: (lambda: _route_with(impl, probs3, k, policy)),
    }

    # parity first: a fast wrong kernel is worthless
    a, b = _kernels_py.topk_select(probs, k), _kernels_c.topk_select(probs, k)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])
    assert np.array_equal(_kernels_py.capacity_keep(bucket, score, cap),
                          _kernels_c.capacity_keep(bucket, score, cap))

    print(f"tokens={T} experts={N} k={k} processes={P} capacity/expert={cap_each}")
    print(f"{'kernel':<14} {'python (ms)':>12} {'cython (ms)':>12} {'speedup':>8}")
    for name, make in cases.items():
        t_py = _best(make(_kernels_py), args.repeat, args.number)
        t_c = _best(make(_kernels_c), args.repeat, args.number)
        print(f"{name:<14} {t_py * 1e3:>12.3f} {t_c * 1e3:>12.3f} {t_py / t_c:>7.2f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
