import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.special import softmax as scipy_softmax

from ta_dispatch.gate import (
    CapacityPolicy,
    GateState,
    Normalization,
    gate_forward,
    gate_values,
    grad_loss_balance,
    grad_loss_topo,
    largest_remainder,
    local_capacities,
    loss_balance,
    loss_topo,
    penalty_weights,
    softmax,
    topk_route,
)

RE1_ROW = np.array([104.348, 10.435, 2.609, 2.609])


# --- oracles -------------------------------------------------------------------


def oracle_topk(row, k):
    order = sorted(range(len(row)), key=lambda e: (-row[e], e))
    return order[:k]


def oracle_keep(buckets, scores, caps):
    """Per bucket keep the highest scores, earlier slot first on ties."""
    keep = [False] * len(buckets)
    by_bucket = {}
    for pos, b in enumerate(buckets):
        by_bucket.setdefault(b, []).append(pos)
    for b, slots in by_bucket.items():
        slots.sort(key=lambda pos: (-scores[pos], pos))
        for pos in slots[:caps[b]]:
            keep[pos] = True
    return keep


def oracle_largest_remainder(weights, total):
    weights = [float(w) for w in weights]
    s = sum(weights)
    quotas = [total * w / s for w in weights]
    base = [int(np.floor(q)) for q in quotas]
    left = total - sum(base)
    order = sorted(range(len(weights)), key=lambda i: (-(quotas[i] - base[i]), i))
    for i in order[:left]:
        base[i] += 1
    return base


probs_arrays = st.tuples(st.integers(1, 3), st.integers(1, 12), st.integers(2, 6)).flatmap(
    lambda shp: arrays(np.float64, (shp[0], shp[1], shp[2]), elements=st.floats(-4, 4))
).map(lambda logits: softmax(logits))


# --- forward -------------------------------------------------------------------


def test_forward_zero_weights_uniform():
    x = np.random.default_rng(0).normal(size=(5, 3))
    probs = gate_forward(x, GateState(np.zeros((3, 4))))
    assert np.all(probs == 0.25)


def test_forward_closed_form():
    x = np.array([[1.0]])
    W = np.log(np.array([[1.0, 3.0]]))
    assert gate_forward(x, GateState(W)) == pytest.approx(np.array([[0.25, 0.75]]), abs=1e-15)


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, (6, 5), elements=st.floats(-50, 50)),
       arrays(np.float64, (5, 4), elements=st.floats(-50, 50)))
def test_forward_matches_scipy(x, W):
    probs = gate_forward(x, GateState(W))
    assert np.allclose(probs, scipy_softmax(x @ W, axis=1), rtol=1e-12, atol=1e-300)
    assert np.allclose(probs.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(probs >= 0)


def test_forward_guards():
    with pytest.raises(FloatingPointError):
        gate_forward(np.array([[1e200]]), GateState(np.array([[1e200, 0.0]])))
    probs = gate_forward(np.array([[1.0]]), GateState(np.array([[800.0, 0.0]])))
    assert np.all(np.isfinite(probs))
    with pytest.raises(ValueError):
        GateState(np.zeros((3, 4)), k=5)
    with pytest.raises(ValueError):
        GateState(np.array([[np.nan, 0.0]]))


# --- routing -------------------------------------------------------------------


def test_route_counts():
    probs = np.array([[0.9, 0.1], [0.8, 0.2], [0.7, 0.3], [0.4, 0.6]])
    res = topk_route(probs, 1, CapacityPolicy("global", 2.0))
    assert res.counts.tolist() == [[3, 1]]
    assert res.dropped.sum() == 0


def test_global_capacity_ordered_truncation():
    probs = np.array([[0.6, 0.4], [0.9, 0.1], [0.7, 0.3], [0.8, 0.2]])
    # S=4, N=2, k=1: C = 1.0 * 4 / 2 = 2
    res = topk_route(probs, 1, CapacityPolicy("global", 1.0))
    kept_scores = sorted(res.scores[0, res.kept[0, :, 0], 0].tolist(), reverse=True)
    assert kept_scores == [0.9, 0.8]
    assert res.dropped[0].tolist() == [2, 0]


def test_proportional_capacity_example():
    assert largest_remainder(RE1_ROW, 144).tolist() == [125, 13, 3, 3]
    c_hat = np.tile(RE1_ROW[:, None], (1, 4))  # column 0 carries the example weights
    caps = local_capacities(CapacityPolicy("local_proportional", 1.2), 144, 4, 4, c_hat)
    assert caps[:, 0].tolist() == [125, 13, 3, 3]
    assert np.all(caps.sum(axis=0) == 144)


def test_proportional_needs_pattern():
    with pytest.raises(ValueError):
        topk_route(np.full((1, 4, 2), 0.5), 1, CapacityPolicy("local_proportional", 1.0))
    with pytest.raises(ValueError):
        CapacityPolicy("global", 0.5)


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, st.integers(1, 10), elements=st.floats(0.01, 100)), st.integers(0, 500))
def test_largest_remainder_oracle(weights, total):
    out = largest_remainder(weights, total)
    assert out.tolist() == oracle_largest_remainder(weights, total)
    assert out.sum() == total


@settings(max_examples=100, deadline=None)
@given(probs_arrays, st.data())
def test_topk_matches_sorted_oracle(probs, data):
    P, S, N = probs.shape
    k = data.draw(st.integers(1, N))
    res = topk_route(probs, k)
    for i in range(P):
        for s in range(S):
            assert res.experts[i, s].tolist() == oracle_topk(probs[i, s].tolist(), k)
            assert np.array_equal(res.scores[i, s], probs[i, s, res.experts[i, s]])
    assert np.allclose(res.mean_probs, probs.mean(axis=1))


@settings(max_examples=100, deadline=None)
@given(probs_arrays, st.data())
def test_capacity_matches_oracle_and_conserves(probs, data):
    P, S, N = probs.shape
    k = data.draw(st.integers(1, min(N, 2)))
    mode = data.draw(st.sampled_from(["none", "global", "local", "local_proportional"]))
    factor = data.draw(st.floats(1.0, 2.0))
    c_hat = data.draw(arrays(np.float64, (P, N), elements=st.floats(0.1, 10)))
    policy = CapacityPolicy(mode, factor)
    res = topk_route(probs, k, policy, c_hat)
    # conservation: kept + dropped = k*S per process
    assert np.all(res.counts.sum(axis=1) + res.dropped.sum(axis=1) == k * S)
    assert np.all(res.kept.sum(axis=(1, 2)) == res.counts.sum(axis=1))
    if mode == "none":
        assert res.kept.all()
        return
    C = policy.expert_capacity(k, S, P, N)
    flat_e = res.experts.reshape(-1).tolist()
    flat_p = np.repeat(np.arange(P), S * k).tolist()
    scores = res.scores.reshape(-1).tolist()
    if mode == "global":
        buckets, caps = flat_e, [C] * N
        assert np.all(res.counts.sum(axis=0) <= C)
    else:
        local = local_capacities(policy, C, P, N, c_hat)
        buckets = [p * N + e for p, e in zip(flat_p, flat_e)]
        caps = local.ravel().tolist()
        assert np.all(res.counts <= local)
    assert res.kept.reshape(-1).tolist() == oracle_keep(buckets, scores, caps)


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, (2, 5, 4), elements=st.floats(-5, 5)), st.floats(-100, 100))
def test_route_shift_invariant(logits, shift):
    a = topk_route(softmax(logits), 2)
    b = topk_route(softmax(logits + shift), 2)
    assert np.array_equal(a.experts, b.experts)


def test_route_deterministic():
    probs = softmax(np.random.default_rng(3).normal(size=(4, 32, 8)))
    policy = CapacityPolicy("global", 1.0)
    a, b = topk_route(probs, 2, policy), topk_route(probs, 2, policy)
    for field in ("experts", "scores", "kept", "counts", "dropped"):
        assert np.array_equal(getattr(a, field), getattr(b, field))


def test_gate_values():
    probs = np.array([[[0.5, 0.3, 0.2]]])
    assert gate_values(topk_route(probs, 1)).ravel().tolist() == [0.5]
    assert gate_values(topk_route(probs, 2)).ravel() == pytest.approx([0.625, 0.375])


# --- losses --------------------------------------------------------------------


def _result(mean_probs, counts, S):
    """Routing result with given statistics; only counts and means feed the losses."""
    from ta_dispatch.gate import RoutingResult
    P, N = counts.shape
    return RoutingResult(
        experts=np.zeros((P, S, 1), dtype=np.int64),
        scores=np.zeros((P, S, 1)),
        kept=np.ones((P, S, 1), dtype=bool),
        counts=np.asarray(counts),
        mean_probs=np.asarray(mean_probs, dtype=np.float64),
        dropped=np.zeros((P, N), dtype=np.int64),
    )


def test_balance_examples():
    res = _result(np.full((1, 4), 0.25), np.full((1, 4), 30), 120)
    assert loss_balance(res)[0] == pytest.approx(0.25, abs=1e-15)
    res = _result(np.array([[1.0, 0, 0, 0]]), np.array([[120, 0, 0, 0]]), 120)
    assert loss_balance(res)[0] == 1.0


@settings(max_examples=80, deadline=None)
@given(probs_arrays)
def test_balance_brute_force(probs):
    res = topk_route(probs, 1)
    P, S, N = probs.shape
    for i in range(P):
        want = 0.0
        for e in range(N):
            m = sum(probs[i, s, e] for s in range(S)) / S
            frac = sum(1 for s in range(S) if res.experts[i, s, 0] == e) / S
            want += m * frac
        assert loss_balance(res)[i] == pytest.approx(want, rel=1e-12, abs=1e-15)


def test_penalty_examples():
    assert np.all(penalty_weights(np.full(4, 30.0)).p == 0.25)
    p = penalty_weights(RE1_ROW).p
    # direct normalization of the reciprocals; the often-quoted [0.0106, 0.1056, 0.4419, 0.4419]
    # does not sum these reciprocals correctly (it is about 4% off)
    inv = 1 / RE1_ROW
    assert p == pytest.approx(inv / inv.sum(), rel=1e-12)
    assert p == pytest.approx([0.010989, 0.10989, 0.43956, 0.43956], abs=1e-5)
    assert p.sum() == pytest.approx(1.0, abs=1e-15)
    assert np.allclose(penalty_weights(2 * RE1_ROW).p, p, rtol=1e-15)


def test_penalty_softmax():
    inv = 1 / RE1_ROW
    pw = penalty_weights(RE1_ROW, "softmax")
    assert pw.p == pytest.approx(scipy_softmax(inv / inv.mean()), rel=1e-12)
    pw = penalty_weights(RE1_ROW, Normalization.SOFTMAX, temperature=1.0)
    assert pw.p == pytest.approx(scipy_softmax(inv), rel=1e-12)
    with pytest.raises(ValueError):
        penalty_weights(RE1_ROW, "softmax", temperature=0.0)
    with pytest.raises(ValueError):
        penalty_weights(np.array([1.0, 0.0]))


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, st.integers(2, 8), elements=st.floats(0.1, 1000), unique=True),
       st.sampled_from(["sum_norm", "softmax"]))
def test_penalty_antitone(row, norm):
    p = penalty_weights(row, norm).p
    assert np.all(p > 0)
    order = np.argsort(row)
    # strictly decreasing p along increasing target volume, unless softmax saturates in FP64
    diffs = np.diff(p[order])
    assert np.all(diffs <= 0)
    if norm == "sum_norm":
        assert np.all(diffs < 0)


@settings(max_examples=80, deadline=None)
@given(probs_arrays)
def test_topo_homogeneous_reduction(probs):
    P, S, N = probs.shape
    res = topk_route(probs, 1)
    p = penalty_weights(np.full(N, S / N)).p
    assert np.allclose(loss_topo(res, p), P * loss_balance(res), rtol=1e-12, atol=1e-15)


def test_topo_ordering():
    p = penalty_weights(RE1_ROW).p
    worst = _result(np.array([[0, 0, 1.0, 0]]), np.array([[0, 0, 16, 0]]), 16)
    best = _result(np.array([[1.0, 0, 0, 0]]), np.array([[16, 0, 0, 0]]), 16)
    assert loss_topo(worst, p, P=4)[0] > loss_topo(best, p, P=4)[0]


@settings(max_examples=60, deadline=None)
@given(probs_arrays)
def test_topo_brute_force(probs):
    P, S, N = probs.shape
    res = topk_route(probs, 1)
    rng = np.random.default_rng(S * N)
    p = penalty_weights(rng.uniform(1, 10, size=(P, N))).p
    got = loss_topo(res, p)
    for i in range(P):
        want = 0.0
        for e in range(N):
            want += p[i, e] * res.mean_probs[i, e] * res.counts[i, e] / S
        assert got[i] == pytest.approx(N * P * want, rel=1e-12, abs=1e-15)


# --- gradients -----------------------------------------------------------------


def _frozen_aux(x, W, result, kind, p=None):
    """Process-averaged aux loss with the routing counts held fixed."""
    probs = gate_forward(x.reshape(-1, x.shape[-1]), GateState(W)).reshape(x.shape[0], x.shape[1], -1)
    frozen = _result(probs.mean(axis=1), result.counts, result.S)
    if kind == "topo":
        return loss_topo(frozen, p).mean()
    return loss_balance(frozen).mean()


def _fd(x, W, result, kind, p=None, h=1e-6):
    g = np.zeros_like(W)
    for idx in np.ndindex(W.shape):
        Wp, Wm = W.copy(), W.copy()
        Wp[idx] += h
        Wm[idx] -= h
        g[idx] = (_frozen_aux(x, Wp, result, kind, p) - _frozen_aux(x, Wm, result, kind, p)) / (2 * h)
    return g


@pytest.mark.parametrize("seed", range(5))
def test_aux_gradients_match_finite_differences(seed):
    rng = np.random.default_rng(seed)
    P, S, d, N = 2, 16, 8, 4
    x = rng.normal(size=(P, S, d))
    state = GateState(rng.normal(scale=0.5, size=(d, N)))
    probs = gate_forward(x, state)
    res = topk_route(probs, 1)
    p = penalty_weights(rng.uniform(1, 50, size=(P, N))).p
    for kind, analytic in (("topo", grad_loss_topo(x, state, res, p)),
                           ("balance", grad_loss_balance(x, state, res))):
        numeric = _fd(x, state.W, res, kind, p)
        err = np.linalg.norm(analytic - numeric) / max(np.linalg.norm(numeric), 1e-12)
        assert err < 1e-4, (kind, err)


def test_gradient_shift_invariance_and_linearity():
    rng = np.random.default_rng(7)
    x = rng.normal(size=(1, 16, 8))
    state = GateState(np.zeros((8, 4)))
    res = topk_route(gate_forward(x, state), 1)
    p = penalty_weights(np.full(4, 4.0)).p
    g = grad_loss_topo(x, state, res, p)
    assert np.allclose(g.sum(axis=1), 0.0, atol=1e-15)
    assert np.allclose(grad_loss_topo(x, state, res, 3 * p), 3 * g, rtol=1e-12, atol=1e-18)
