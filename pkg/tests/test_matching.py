import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cfnoma.matching import (
    SwapKind, SwapPolicy, SwapProposal, accept_swap, evaluate_utility, make_state,
    propose_swaps, run_matching_sca, run_sca_beamforming, swap_pass, verify_stability,
)
from cfnoma.system import (
    ChannelMatrix, SicMatrix, SystemConfig, matched_filter, random_beams, rate_report,
)

from shared import random_sic, seeded


def brute_force_swaps(A, with_order=True):
    """Every swap reachable from A, as (label, resulting alpha bytes), found by
    trying all participant tuples over users and the hole."""
    K = A.shape[0]
    out = set()
    slots = list(range(K)) + [None]
    unmatched = lambda a, b: not A[a, b] and not A[b, a]
    for u, v, u2, v2 in itertools.product(slots, repeat=4):
        if u is None:
            continue
        if v is not None and (v == u or not A[u, v]):
            continue
        B = A.copy()
        if u2 is None:
            # hole swaps: drop v, or take v2 from the unmatched pool
            if v is not None and v2 is None:
                B[u, v] = 0
                out.add(("hole_remove", B.tobytes()))
            elif v is None and v2 is not None and v2 != u and unmatched(u, v2):
                B[u, v2] = 1
                out.add(("hole_add", B.tobytes()))
            continue
        if u2 == u or v is None:
            continue
        if v2 is None:
            if v != u2 and unmatched(u2, v):
                B[u, v], B[u2, v] = 0, 1
                out.add(("transfer", B.tobytes()))
            continue
        if v2 in (u, u2) or not A[u2, v2] or v2 == v or v == u2:
            continue
        if unmatched(u, v2) and unmatched(u2, v):
            B[u, v], B[u2, v2], B[u, v2], B[u2, v] = 0, 0, 1, 1
            out.add(("swap", B.tobytes()))
    if with_order:
        for u, v in zip(*np.nonzero(A - np.eye(K, dtype=A.dtype))):
            B = A.copy()
            B[u, v], B[v, u] = 0, 1
            out.add(("order", B.tobytes()))
    return out


@settings(max_examples=80, deadline=None)
@given(seed=st.integers(0, 100_000), K=st.integers(2, 5))
def test_proposals_match_brute_force(seed, K):
    A = random_sic(np.random.default_rng(seed), K)
    props = list(propose_swaps(A, SwapPolicy.ENHANCED))
    got = {(p.label, p.apply(A).tobytes()) for p in props}
    assert got == brute_force_swaps(A)
    # each swap produced once, results always valid SIC matrices
    assert len(got) == len(props)
    for p in props:
        SicMatrix(p.apply(A))


def test_no_order_policy_skips_order_swaps():
    A = random_sic(np.random.default_rng(4), 4)
    labels = {p.label for p in propose_swaps(A, SwapPolicy.ENHANCED_NO_ORDER)}
    assert "order" not in labels


def test_empty_matching_two_users_gives_two_hole_adds():
    props = list(propose_swaps(np.eye(2, dtype=int)))
    assert [(p.label, p.u, p.v2) for p in props] == [("hole_add", 0, 1), ("hole_add", 1, 0)]


def test_full_clique_only_order_swaps_and_removals():
    A = np.tril(np.ones((4, 4), dtype=int))
    labels = {p.label for p in propose_swaps(A)}
    assert labels == {"order", "hole_remove"}


def order_swap_instance():
    # weak user 0 and strong user 1; user 1 leaks onto user 0's antenna
    H = ChannelMatrix(np.array([[1.0, 0.0], [0.8, 2.0]]))
    W = np.diag([np.sqrt(5.0), np.sqrt(5.0)])
    return SystemConfig(num_antennas=2, num_users=2, power_budget=10.0), H, W


def test_order_swap_accepted_only_under_enhanced_policy():
    cfg, H, W = order_swap_instance()
    G = np.abs(H.h.conj() @ W) ** 2
    # "0 decodes 1": user 1 is capped by user 0's decode rate
    u0 = np.log2(1 + G[0, 0])
    u1 = min(np.log2(1 + G[1, 1] / (G[1, 0] + 1)), np.log2(1 + G[0, 1] / (G[0, 0] + 1)))
    # "1 decodes 0": user 0 is capped by user 1's decode rate
    v0 = min(np.log2(1 + G[0, 0] / (G[0, 1] + 1)), np.log2(1 + G[1, 0] / (G[1, 1] + 1)))
    v1 = np.log2(1 + G[1, 1])
    assert v0 + v1 > u0 + u1

    state = make_state(np.array([[1, 1], [0, 1]]), W, H, cfg)
    assert state.sum_utility == pytest.approx(u0 + u1, rel=1e-12)
    order = SwapProposal(SwapKind.DECODING_ORDER, 0, 1, 1, 0)
    ok, new = accept_swap(order, state, SwapPolicy.ENHANCED, H, cfg)
    assert ok
    np.testing.assert_array_equal(new.alpha, [[1, 0], [1, 1]])
    assert new.sum_utility == pytest.approx(v0 + v1, rel=1e-12)
    kinds = {p.kind for p in propose_swaps(state, SwapPolicy.ENHANCED_NO_ORDER)}
    assert SwapKind.DECODING_ORDER not in kinds


def test_rejected_swap_leaves_state_untouched():
    cfg, H = seeded(4, corr=0.9, seed=1)
    W = matched_filter(H, cfg.power_budget)
    state = make_state(np.eye(4), W, H, cfg)
    for prop in propose_swaps(state):
        ok, out = accept_swap(prop, state, SwapPolicy.ENHANCED, H, cfg)
        if not ok:
            assert out is state
            np.testing.assert_array_equal(out.alpha, np.eye(4))
            return
    pytest.skip("every proposal improved")


def test_zero_delta_swap_rejected_under_all_policies():
    cfg, H = seeded(3, seed=2)
    W = np.zeros((4, 3), dtype=complex)
    W[:, 2] = matched_filter(H, cfg.power_budget)[:, 2]
    state = make_state(np.eye(3), W, H, cfg)
    # users 0 and 1 carry no power: pairing them changes no utility
    prop = SwapProposal(SwapKind.CONVENTIONAL, 0, None, None, 1)
    for policy in SwapPolicy:
        ok, out = accept_swap(prop, state, policy, H, cfg)
        assert not ok and out is state


def test_utility_equals_effective_rate():
    rng = np.random.default_rng(8)
    cfg, H = seeded(4, corr=0.8, seed=8)
    A = random_sic(rng, 4)
    W = random_beams(rng, 4, 4, cfg.power_budget)
    U, total = evaluate_utility(make_state(A, W, H, cfg), H, cfg)
    rep = rate_report(A, W, H, cfg)
    np.testing.assert_allclose(U, rep.effective_rate, rtol=0, atol=1e-12)
    assert total == pytest.approx(rep.effective_sum_rate, abs=1e-12)


def test_identity_utility_is_own_rate():
    cfg, H = seeded(3, seed=3)
    W = matched_filter(H, cfg.power_budget)
    U, _ = evaluate_utility(make_state(np.eye(3), W, H, cfg), H, cfg)
    np.testing.assert_allclose(U, rate_report(np.eye(3), W, H, cfg).rate_own)


def test_stability_detects_a_reverted_swap():
    cfg, H = seeded(5, corr=0.9, seed=6)
    W = random_beams(np.random.default_rng(6), 4, 5, cfg.power_budget)
    start = make_state(np.eye(5), W, H, cfg)
    final, accepted = swap_pass(start, SwapPolicy.ENHANCED, H, cfg)
    assert accepted and verify_stability(final, H, cfg)
    before_last, _ = swap_pass(start, SwapPolicy.ENHANCED, H, cfg, max_accepts=len(accepted) - 1)
    assert not verify_stability(before_last, H, cfg)


def test_swap_pass_is_strictly_increasing():
    cfg, H = seeded(6, corr=0.9, seed=9)
    W = random_beams(np.random.default_rng(9), 4, 6, cfg.power_budget)
    state = make_state(np.eye(6), W, H, cfg)
    seen = [state.sum_utility]
    swap_pass(state, SwapPolicy.ENHANCED, H, cfg, on_accept=lambda p, s: seen.append(s.sum_utility))
    assert len(seen) > 1 and np.all(np.diff(seen) > 0)


def test_sca_zero_passes_returns_start():
    cfg, H = seeded(3)
    W0 = matched_filter(H, cfg.power_budget)
    res = run_sca_beamforming(np.eye(3), H, cfg, W0, 0)
    np.testing.assert_array_equal(res.W, W0)
    assert res.solves == 0


def test_sca_single_user_reaches_matched_filter():
    cfg, H = seeded(1, seed=4)
    W0 = random_beams(np.random.default_rng(1), 4, 1, cfg.power_budget)
    res = run_sca_beamforming(np.eye(1), H, cfg, W0, 3)
    capacity = np.log2(1 + cfg.power_budget * H.norms2[0])
    assert res.objective == pytest.approx(capacity, rel=1e-3)


def test_sca_objective_non_decreasing():
    cfg, H = seeded(4, corr=0.9, seed=12)
    A = np.tril(np.ones((4, 4), dtype=int))
    res = run_sca_beamforming(A, H, cfg, matched_filter(H, cfg.power_budget), 8)
    assert np.all(np.diff(res.objectives) >= -1e-7)


def test_matching_single_user():
    cfg, H = seeded(1, seed=5)
    res = run_matching_sca(cfg, H)
    np.testing.assert_array_equal(res.alpha.alpha, [[1]])
    mf = matched_filter(H, cfg.power_budget)
    cos = abs(np.vdot(res.W.w[:, 0], mf[:, 0])) / np.linalg.norm(res.W.w) / np.linalg.norm(mf)
    assert cos == pytest.approx(1.0, abs=1e-4)
    assert res.stable


@pytest.mark.parametrize("policy", list(SwapPolicy))
def test_matching_runs_under_every_policy(policy):
    cfg, H = seeded(4, corr=0.9, seed=3)
    res = run_matching_sca(cfg, H, policy)
    assert np.all(res.report.effective_rate >= cfg.r_min - 1e-9)
    assert res.outer_iters <= cfg.t_msca_max
    assert np.all(np.diff(res.objectives) >= -1e-7)
    SicMatrix(res.alpha.alpha)


def test_matching_trace_layout():
    cfg, H = seeded(3, corr=0.9, seed=1)
    res = run_matching_sca(cfg, H)
    events = {row[2] for row in res.trace}
    assert events <= {"sca", "swap_conv", "swap_order", "reject"}
    assert all(len(row) == 5 for row in res.trace)
    assert res.inner_solves == max(row[1] for row in res.trace)


def test_matching_near_two_user_oracle(two_user):
    # multi-start SLSQP optimum over every SIC matrix, tools/derive_oracles.py
    cfg, H = two_user
    assert run_matching_sca(cfg, H).sum_rate >= 0.99 * 8.607300632316178


@pytest.mark.acceptance
def test_policy_dominance_statistical():
    # mean over 50 seeded K=10, corr=0.9 channels; each step may dip by 0.05
    order = [SwapPolicy.ENHANCED, SwapPolicy.ENHANCED_NO_ORDER, SwapPolicy.PAIRWISE,
             SwapPolicy.CONVENTIONAL]
    means = []
    for p in order:
        vals = []
        for r in range(50):
            cfg, H = seeded(10, corr=0.9, seed=9000 + r)
            vals.append(run_matching_sca(cfg, H, p).sum_rate)
        means.append(float(np.mean(vals)))
    gaps = np.diff(means)
    assert np.all(gaps <= 0.05), dict(zip([p.value for p in order], means))
