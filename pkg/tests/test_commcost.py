import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ta_dispatch.commcost import (
    BYTES_PER_MB,
    DispatchConfig,
    DispatchMatrix,
    bottleneck,
    dispatch_from_csv,
    dispatch_from_json,
    dispatch_to_csv,
    dispatch_to_json,
    even_pattern,
    fit_profile,
    pair_cost,
    read_samples_csv,
    t_comm_lower,
)
from ta_dispatch.optimizer import solve
from ta_dispatch.topology import LinkProfile, Topology, hierarchical_from_levels, parse_topology

MB_TOKEN = dict(d=1_000_000, b=1)  # one token is exactly 1 MB


def scalar_pair_cost(alpha, beta, c, i, j, E, token_bytes):
    """Independent scalar oracle: loop over j's experts, convert bytes to MB by hand."""
    tokens = 0.0
    for e in range(j * E, (j + 1) * E):
        tokens += float(c[i][e])
    return alpha[i][j] + beta[i][j] * tokens * token_bytes / 1e6


def re1_profile():
    topo = parse_topology("[2,2]")
    return topo, hierarchical_from_levels(topo, [1.0, 4.0], 0.1)


# --- pair cost -----------------------------------------------------------------


def test_table1_double_chunk():
    # beta from the even row intra pair: 758 us for 32 MB
    beta_intra = 758 / 32
    beta = np.full((4, 4), beta_intra)
    cfg = DispatchConfig(k=1, S=128, N=4, P=4, **MB_TOKEN)
    c = np.zeros((4, 4))
    c[0, 1] = 64
    cost = pair_cost(LinkProfile(np.zeros((4, 4)), beta), DispatchMatrix(c, cfg), 0, 1)
    assert cost == pytest.approx(1516, abs=1)
    assert abs(cost - 1492) / 1492 < 0.02


def test_zero_row_costs_alpha():
    alpha = np.full((4, 4), 7.0)
    prof = LinkProfile(alpha, np.ones((4, 4)))
    dm = DispatchMatrix(np.zeros((4, 4)), DispatchConfig(1, 10, 4, 4))
    assert pair_cost(prof, dm, 2, 3) == 7.0
    assert t_comm_lower(prof, dm).bottleneck_us == 7.0


def test_re1_single_pair():
    _, prof = re1_profile()
    c = np.zeros((4, 4))
    c[0, 2] = 2.609
    dm = DispatchMatrix(c, DispatchConfig(1, 120, 4, 4, **MB_TOKEN))
    expected = scalar_pair_cost(prof.alpha, prof.beta, c, 0, 2, 1, 1e6)
    assert pair_cost(prof, dm, 0, 2) == pytest.approx(expected, rel=1e-15)
    assert pair_cost(prof, dm, 0, 2) == pytest.approx(10.436, abs=1e-9)


def test_pair_cost_rejects():
    _, prof = re1_profile()
    dm = even_pattern(DispatchConfig(1, 120, 4, 4))
    with pytest.raises(IndexError):
        pair_cost(prof, dm, 0, 4)
    with pytest.raises(ValueError):
        pair_cost(LinkProfile(np.zeros((2, 2)), np.ones((2, 2))), dm, 0, 1)
    huge = DispatchMatrix(np.full((4, 4), 1e306), DispatchConfig(1, 120, 4, 4, d=10**9, b=4))
    with pytest.raises(OverflowError):
        pair_cost(prof, huge, 0, 1)
    with pytest.raises(OverflowError):
        t_comm_lower(prof, huge)


@st.composite
def cost_cases(draw):
    P = draw(st.sampled_from([2, 3, 4]))
    E = draw(st.integers(1, 3))
    N = P * E
    alpha = draw(arrays(np.float64, (P, P), elements=st.floats(0, 100)))
    beta = draw(arrays(np.float64, (P, P), elements=st.floats(0.5, 200)))
    c = draw(arrays(np.float64, (P, N), elements=st.floats(0, 1000)))
    d = draw(st.integers(1, 4096))
    b = draw(st.sampled_from([1, 2, 4]))
    cfg = DispatchConfig(k=1, S=1000.0, N=N, P=P, d=d, b=b)
    return LinkProfile(alpha, beta), DispatchMatrix(c, cfg)


@settings(max_examples=100, deadline=None)
@given(cost_cases())
def test_pair_costs_match_scalar_oracle(case):
    prof, dm = case
    cfg = dm.config
    report = t_comm_lower(prof, dm)
    for i in range(cfg.P):
        for j in range(cfg.P):
            want = scalar_pair_cost(prof.alpha, prof.beta, dm.c, i, j, cfg.E, cfg.d * cfg.b)
            assert report.pair_cost[i, j] == pytest.approx(want, rel=1e-12, abs=1e-12)
            assert pair_cost(prof, dm, i, j) == pytest.approx(want, rel=1e-12, abs=1e-12)
            assert report.pair_cost[i, j] >= prof.alpha[i, j]
    assert report.bottleneck_us == report.pair_cost.max()
    assert report.bottleneck_us == pytest.approx(bottleneck(prof, dm.c, cfg.token_mb, cfg.E), rel=1e-12)
    assert np.allclose(report.per_device_send_us, report.pair_cost.sum(axis=1))
    assert np.allclose(report.per_device_recv_us, report.pair_cost.sum(axis=0))
    assert report.total_bytes == pytest.approx(dm.c.sum() * cfg.d * cfg.b)


@settings(max_examples=100, deadline=None)
@given(cost_cases(), st.data())
def test_monotone_in_tokens(case, data):
    prof, dm = case
    i = data.draw(st.integers(0, dm.config.P - 1))
    e = data.draw(st.integers(0, dm.config.N - 1))
    bump = data.draw(st.floats(0.0, 500.0))
    c = dm.c.copy()
    c[i, e] += bump
    before = t_comm_lower(prof, dm)
    after = t_comm_lower(prof, DispatchMatrix(c, dm.config))
    assert np.all(after.pair_cost >= before.pair_cost)
    assert after.bottleneck_us >= before.bottleneck_us


@settings(max_examples=100, deadline=None)
@given(cost_cases(), st.floats(0.0, 10.0))
def test_scale_linear_without_alpha(case, t):
    prof, dm = case
    prof = LinkProfile(np.zeros_like(prof.alpha), prof.beta)
    scaled = DispatchMatrix(dm.c * t, dm.config)
    assert np.allclose(t_comm_lower(prof, scaled).pair_cost, t * t_comm_lower(prof, dm).pair_cost,
                       rtol=1e-12, atol=1e-9)


# --- t_comm_lower and the even baseline ------------------------------------------


def test_re1_optimized_and_even():
    topo, prof = re1_profile()
    cfg = DispatchConfig(1, 120, 4, 4, **MB_TOKEN)
    target = solve(topo, prof, cfg).pattern
    report = t_comm_lower(prof, target.as_dispatch())
    off = ~np.eye(4, dtype=bool)
    assert np.allclose(report.pair_cost[off], 120 / 11.5, rtol=1e-12)
    assert report.bottleneck_us == pytest.approx(10.435, abs=1e-3)
    assert t_comm_lower(prof, even_pattern(cfg)).bottleneck_us == pytest.approx(120.0, rel=1e-12)


def test_homogeneous_even_equals_optimized():
    topo = parse_topology('{"kind": "homogeneous", "structure": 4}')
    prof = LinkProfile(np.zeros((4, 4)), np.full((4, 4), 3.0))
    cfg = DispatchConfig(1, 120, 8, 4, **MB_TOKEN)
    target = solve(topo, prof, cfg).pattern
    assert t_comm_lower(prof, target.as_dispatch()).bottleneck_us == pytest.approx(
        t_comm_lower(prof, even_pattern(cfg)).bottleneck_us, rel=1e-12)


@pytest.mark.parametrize("k,S,N,value", [(1, 120, 4, 30.0), (2, 6, 64, 0.1875), (2, 4, 8, 1.0)])
def test_even_pattern(k, S, N, value):
    P = 4
    dm = even_pattern(DispatchConfig(k, S, N, P))
    assert np.all(dm.c == value)
    assert np.allclose(dm.c.sum(axis=1), k * S)
    assert np.allclose(dm.c.sum(axis=0), k * S * P / N)


levels = st.sampled_from([[2, 2], [4, 2], [2, 2, 2], [3, 2]])
log_beta = st.floats(np.log(0.1), np.log(32.0)).map(np.exp)


@settings(max_examples=60, deadline=None)
@given(levels, st.lists(log_beta, min_size=4, max_size=4), st.integers(1, 2))
def test_even_never_beats_target(lv, betas, E):
    topo = Topology.from_levels(lv)
    P = topo.device_count
    prof = hierarchical_from_levels(topo, betas[1:len(lv) + 1], betas[0])
    cfg = DispatchConfig(1, 64, P * E, P, **MB_TOKEN)
    target = solve(topo, prof, cfg).pattern
    t_opt = t_comm_lower(prof, target.as_dispatch()).bottleneck_us
    t_even = t_comm_lower(prof, even_pattern(cfg)).bottleneck_us
    assert t_opt <= t_even * (1 + 1e-12)


def test_config_validation():
    with pytest.raises(ValueError):
        DispatchConfig(1, 10, 6, 4)
    with pytest.raises(ValueError):
        DispatchConfig(0, 10, 4, 4)
    with pytest.raises(ValueError):
        DispatchConfig(1, 0, 4, 4)
    with pytest.raises(ValueError):
        DispatchMatrix(np.zeros((4, 3)), DispatchConfig(1, 10, 4, 4))
    with pytest.raises(ValueError):
        DispatchMatrix(-np.ones((4, 4)), DispatchConfig(1, 10, 4, 4))
    cfg = DispatchConfig(2, 10, 8, 4, d=4096, b=2)
    assert cfg.E == 2 and cfg.per_expert == 10 and cfg.token_mb == 4096 * 2 / BYTES_PER_MB


# --- fitting -------------------------------------------------------------------


def test_fit_table1_intra():
    prof = fit_profile([(0, 1, 32, 758), (0, 1, 64, 1492)], P=2)
    assert prof.alpha[0, 1] == pytest.approx(24.0, abs=1e-9)
    assert prof.beta[0, 1] == pytest.approx(22.9375, abs=1e-9)
    assert prof.beta[1, 0] == prof.beta[0, 1]  # mirrored


def test_fit_table1_inter():
    prof = fit_profile([(0, 1, 32, 5609), (0, 1, 16, 2835)], P=2)
    assert prof.alpha[0, 1] == pytest.approx(61.0, abs=1e-9)
    assert prof.beta[0, 1] == pytest.approx(173.375, abs=1e-9)


def test_fit_single_size_and_origin():
    prof = fit_profile([(0, 1, 32, 758)], P=2)
    assert prof.alpha[0, 1] == 0 and prof.beta[0, 1] == pytest.approx(758 / 32)
    prof = fit_profile([(0, 1, 1, 3.0), (0, 1, 2, 6.0), (0, 1, 5, 15.0)], P=2)
    assert prof.alpha[0, 1] == pytest.approx(0, abs=1e-12) and prof.beta[0, 1] == pytest.approx(3.0)


def test_fit_clamps_negative_alpha():
    # the free fit would give a negative intercept; refit through the origin
    prof = fit_profile([(0, 1, 1, 1.0), (0, 1, 2, 3.0)], P=2)
    assert prof.alpha[0, 1] == 0
    assert prof.beta[0, 1] == pytest.approx((1 * 1 + 2 * 3) / 5)


def test_fit_rejects():
    with pytest.raises(ValueError):
        fit_profile([], P=2)
    with pytest.raises(ValueError):
        fit_profile([(0, 1, 0, 5.0), (0, 1, 1, 6.0)], P=2)
    with pytest.raises(ValueError):
        fit_profile([(0, 1, 1, 5.0), (0, 1, 2, 4.0)], P=2)


@settings(max_examples=100, deadline=None)
@given(st.floats(0.0, 500.0), st.floats(0.1, 500.0),
       st.lists(st.floats(0.5, 512.0), min_size=2, max_size=6, unique=True))
def test_fit_recovers_noiseless(alpha, beta, sizes):
    samples = [(0, 1, s, alpha + beta * s) for s in sizes]
    prof = fit_profile(samples, P=2)
    assert prof.beta[0, 1] == pytest.approx(beta, rel=1e-9)
    assert prof.alpha[0, 1] == pytest.approx(alpha, rel=1e-9, abs=1e-9 * beta * max(sizes))


def test_samples_csv():
    rows = read_samples_csv("src,dst,message_mb,time_us\n0,1,32,758\n")
    assert rows == [(0, 1, 32.0, 758.0)]
    with pytest.raises(ValueError):
        read_samples_csv("a,b\n1,2\n")


# --- files ---------------------------------------------------------------------


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (4, 8), elements=st.floats(0, 1e6)))
def test_dispatch_files_round_trip(c):
    assert np.array_equal(dispatch_from_csv(dispatch_to_csv(c)), c)
    dm = DispatchMatrix(c, DispatchConfig(2, 5.5, 8, 4, d=16, b=4))
    back = dispatch_from_json(dispatch_to_json(dm, note="x"))
    assert np.array_equal(back.c, dm.c) and back.config == dm.config


def test_dispatch_files_reject():
    with pytest.raises(ValueError):
        dispatch_from_csv("1,2\n3\n")
    with pytest.raises(ValueError):
        dispatch_from_csv("")
    with pytest.raises(ValueError):
        dispatch_from_json(json.dumps({"c": [1, 2, 3]}))


def test_report_json_row_major():
    _, prof = re1_profile()
    report = t_comm_lower(prof, even_pattern(DispatchConfig(1, 120, 4, 4, **MB_TOKEN)))
    doc = report.to_dict()
    assert doc["P"] == 4 and len(doc["pair_cost_us"]) == 16
    assert doc["pair_cost_us"][1] == report.pair_cost[0, 1]
    assert doc["bottleneck_us"] == report.bottleneck_us
