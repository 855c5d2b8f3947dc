import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cfnoma.conic import solve
from cfnoma.kernel import (
    AuxiliaryBlock, BeamMap, beams_from, build_beamforming_problem, intf_beta,
    intf_beta_matrix, taylor_bilinear, taylor_log_intf, taylor_signal,
)
from cfnoma.system import channel_gains, interference_matrix, random_beams, rate_report

from shared import A3, W3, random_sic, seeded

finite = dict(allow_nan=False, allow_infinity=False)
cplx = st.complex_numbers(max_magnitude=5.0, **finite)


@settings(max_examples=200, deadline=None)
@given(h=st.lists(cplx, min_size=3, max_size=3), wb=st.lists(cplx, min_size=3, max_size=3),
       w=st.lists(cplx, min_size=3, max_size=3))
def test_signal_cut_is_tight_minorant(h, wb, w):
    h, wb, w = np.array(h), np.array(wb), np.array(w)
    cut = taylor_signal(wb, h)
    exact = lambda v: abs(np.vdot(h, v)) ** 2
    assert cut.bound(h, wb) == pytest.approx(exact(wb), abs=1e-10 * max(1.0, exact(wb)))
    assert cut.bound(h, w) <= exact(w) + 1e-9 * max(1.0, exact(w))


@settings(max_examples=200, deadline=None)
@given(Ib=st.floats(1e-3, 1e4), I=st.floats(1e-3, 1e4), S=st.floats(0.0, 1e4))
def test_log_cut_is_tight_lower_bound(Ib, I, S):
    cut = taylor_log_intf(Ib)
    exact = lambda S_, I_: np.log2(1.0 + S_ / I_)
    assert cut.rate_bound(S, Ib) == pytest.approx(exact(S, Ib), abs=1e-10)
    assert cut.rate_bound(S, I) <= exact(S, I) + 1e-10


def test_log_cut_rejects_nonpositive_point():
    with pytest.raises(ValueError):
        taylor_log_intf(0.0)


@settings(max_examples=200, deadline=None)
@given(ab=st.floats(0, 1), rb=st.floats(0, 20), a=st.floats(0, 1), r=st.floats(0, 20))
def test_bilinear_cut_is_tight_majorant(ab, rb, a, r):
    cut = taylor_bilinear(ab, rb)
    assert cut.upper(ab, rb) == pytest.approx(ab * rb, abs=1e-10)
    assert cut.upper(a, r) >= a * r - 1e-9


@pytest.mark.parametrize("seed", range(3))
def test_interference_is_midpoint_convex_in_beta(seed):
    rng = np.random.default_rng(seed)
    K = 4
    cfg, H = seeded(K, corr=0.7, seed=seed)
    G = channel_gains(H, random_beams(rng, 4, K, cfg.power_budget))
    worst = -np.inf
    for _ in range(1000):
        b1, b2 = rng.uniform(size=(2, K, K))
        f1, f2 = intf_beta_matrix(b1, G, 1.0, H.below), intf_beta_matrix(b2, G, 1.0, H.below)
        fm = intf_beta_matrix(0.5 * (b1 + b2), G, 1.0, H.below)
        worst = max(worst, np.max(fm - 0.5 * (f1 + f2)))
    assert worst <= 1e-12


def test_exact_aux_block_matches_rates(three_user):
    cfg, H = three_user
    aux = AuxiliaryBlock.exact(A3, W3, H, 1.0)
    rep = rate_report(A3, W3, H, cfg)
    np.testing.assert_allclose(np.diag(aux.r), rep.effective_rate, rtol=1e-12)
    G = channel_gains(H, W3)
    np.testing.assert_allclose(aux.I, interference_matrix(A3, G, 1.0, H.below), rtol=1e-12)


def test_surrogate_is_tight_at_expansion_point():
    # the expansion point satisfies every cut, so the optimum is at least its rate
    rng = np.random.default_rng(5)
    cfg, H = seeded(4, corr=0.8, seed=5)
    A = random_sic(rng, 4)
    W = random_beams(rng, 4, 4, cfg.power_budget)
    G = channel_gains(H, W)
    I = interference_matrix(A, G, 1.0, H.below)
    prog = build_beamforming_problem(A, H, cfg, W, I)
    res = solve(prog)
    assert res.ok
    start = rate_report(A, W, H, cfg).effective_sum_rate
    assert res.objective >= start - 1e-6
    W_new = beams_from(prog, res)
    assert rate_report(A, W_new, H, cfg).effective_sum_rate >= res.objective - 1e-5


def test_beam_map_round_trip():
    M, K = 3, 2
    bmap = BeamMap.direct(M, K)
    W = np.arange(6).reshape(M, K) + 1j * np.arange(6, 12).reshape(M, K)
    z = np.concatenate([W.real.ravel(), W.imag.ravel()])
    np.testing.assert_array_equal(bmap.beams(z, M, K), W)


def test_intf_beta_scalar_matches_matrix():
    rng = np.random.default_rng(2)
    cfg, H = seeded(3, seed=2)
    W = random_beams(rng, 4, 3, cfg.power_budget)
    B = rng.uniform(size=(3, 3))
    full = intf_beta_matrix(B, channel_gains(H, W), 1.0, H.below)
    for i in range(3):
        for k in range(3):
            assert intf_beta(B, W, H, 1.0, i, k) == pytest.approx(full[i, k], rel=1e-13)
