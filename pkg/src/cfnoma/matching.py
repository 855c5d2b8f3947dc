"""Matching-SCA: swap matching over SIC pairs, alternated with SCA beamforming.

The matching ``mu`` is carried as the SIC matrix itself: ``alpha[u, v] = 1``
means u is matched with v and decodes it.  At fixed beams every swap only
changes ``alpha``, so candidate swaps are scored in batches with
:func:`~cfnoma.system.interference_matrix`.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterator

import numpy as np

from .conic import solve
from .kernel import AuxiliaryBlock, BeamMap, beams_from, build_beamforming_problem
from .system import (
    BeamMatrix, ChannelMatrix, RateReport, SicMatrix, SystemConfig, _alpha, _beams, _channel,
    channel_gains, effective_rates, interference_matrix, random_beams, rate_report,
)

__all__ = [
    "ScaResult", "run_sca_beamforming", "restore_feasibility", "SwapKind", "SwapPolicy", "SwapProposal",
    "MatchingState", "MatchingResult", "make_state", "evaluate_utility", "propose_swaps",
    "accept_swap", "swap_pass", "verify_stability", "run_matching_sca", "DELTA_TOL",
]

DELTA_TOL = 1e-9  # a swap must raise its criterion by more than this to count


# -- inner loop ------------------------------------------------------------

@dataclass
class ScaResult:
    """Outcome of successive beamforming solves at a fixed SIC matrix.

    ``objectives[0]`` is the effective sum rate at ``W_init`` and each further
    entry the effective sum rate after one accepted solve; ``surrogate`` holds
    the convex objective values as returned by the solver.
    """

    W: np.ndarray
    aux: AuxiliaryBlock | None
    objectives: list = field(default_factory=list)
    surrogate: list = field(default_factory=list)
    own_sums: list = field(default_factory=list)
    solves: int = 0
    failed: bool = False
    statuses: list = field(default_factory=list)
    solve_ms: float = 0.0

    @property
    def objective(self) -> float:
        return self.objectives[-1]


def _sums(A, W, Hm, sigma2):
    """(effective sum rate, own-rate sum) at ``(A, W)``."""
    G = channel_gains(Hm, W)
    R = np.log2(1.0 + G / interference_matrix(A, G, sigma2, Hm.below))
    return float(effective_rates(A, R).sum()), float(np.trace(R))


def run_sca_beamforming(alpha, H, config: SystemConfig, W_init, L: int,
                        tol: float | None = None, beam_map: BeamMap | None = None) -> ScaResult:
    """Up to ``L`` successive solves of the beamforming surrogate.

    Every solve is expanded at the current beams with the exact interference
    as ``I_bar``, so the current point is feasible and the exact optimum can
    only raise the objective.  A solve whose beams score lower than the
    current ones (solver round-off) is discarded and the loop stops.  With
    ``tol`` the loop also stops once the squared gain of a pass is below it.
    If the floors cannot be met, the closest point found is returned with
    ``failed`` set; if the very first solve fails, ``W_init`` is returned with
    ``failed`` set.
    """
    Hm = _channel(H)
    A = np.asarray(_alpha(alpha)).round()
    sigma2 = config.noise_power
    W = _beams(W_init).copy()
    extra = 0
    if L > 0 and _margin(A, W, Hm, config) < 0:
        W, ok, extra = restore_feasibility(A, Hm, config, W, beam_map=beam_map)
        if not ok:
            # keep the best margin reached so alternating callers can build on it
            res = ScaResult(W.copy(), None, [np.nan], solves=extra, failed=True)
            res.own_sums = [np.nan]
            return res
    eff, own = _sums(A, W, Hm, sigma2)
    out = ScaResult(W, None, [eff], own_sums=[own], solves=extra)
    for _ in range(L):
        G = channel_gains(Hm, W)
        I_bar = interference_matrix(A, G, sigma2, Hm.below)
        prog = build_beamforming_problem(A, Hm, config, W, I_bar, beam_map=beam_map)
        res = solve(prog)
        out.solves += 1
        out.solve_ms += res.solve_ms
        out.statuses.append(res.status)
        if not res.ok:
            out.failed = out.solves == extra + 1
            break
        W_new = beams_from(prog, res)
        W_new = _clip_power(W_new, config.power_budget)
        obj, own = _sums(A, W_new, Hm, sigma2)
        out.surrogate.append(float(res.objective))
        if obj < out.objectives[-1]:
            break
        gain = obj - out.objectives[-1]
        W = W_new
        out.objectives.append(obj)
        out.own_sums.append(own)
        if tol is not None and gain * gain <= tol:
            break
    out.W = W
    G = channel_gains(Hm, W)
    I = interference_matrix(A, G, sigma2, Hm.below)
    out.aux = AuxiliaryBlock(G, I, np.log2(1.0 + G / I))
    return out


FEASIBILITY_MARGIN = 1e-6


def _margin(A, W, Hm, config) -> float:
    """Smallest gap between a user's effective rate and its floor."""
    G = channel_gains(Hm, W)
    R = np.log2(1.0 + G / interference_matrix(A, G, config.noise_power, Hm.below))
    return float(np.min(effective_rates(A, R) - config.r_min))


def restore_feasibility(alpha, H, config: SystemConfig, W_init, max_passes=None,
                        beam_map: BeamMap | None = None):
    """Max-min SCA on the rate-floor margin until every floor is met.

    Returns ``(W, ok, solves)``; ``ok`` is False when the margin stays
    negative after ``max_passes`` (default ``sca_max_passes``) solves or a
    solve fails, in which case ``W`` is the best point found.
    """
    Hm = _channel(H)
    A = np.asarray(_alpha(alpha)).round()
    W = _beams(W_init).copy()
    best = _margin(A, W, Hm, config)
    solves = 0
    for _ in range(config.sca_max_passes if max_passes is None else max_passes):
        if best >= FEASIBILITY_MARGIN:
            break
        G = channel_gains(Hm, W)
        I_bar = interference_matrix(A, G, config.noise_power, Hm.below)
        prog = build_beamforming_problem(A, Hm, config, W, I_bar, beam_map=beam_map,
                                         feasibility=True)
        res = solve(prog)
        solves += 1
        if not res.ok:
            break
        W_new = _clip_power(beams_from(prog, res), config.power_budget)
        m = _margin(A, W_new, Hm, config)
        if m <= best + 1e-9:
            break
        W, best = W_new, m
    return W, best >= 0.0, solves


def _clip_power(W, P):
    # interior-point output may overshoot the budget by ~tolerance
    p = float(np.sum(np.abs(W) ** 2))
    return W * np.sqrt(P / p) if p > P else W


# -- matching primitives ---------------------------------------------------

class SwapKind(Enum):
    CONVENTIONAL = "swap_conv"
    DECODING_ORDER = "swap_order"


class SwapPolicy(Enum):
    ENHANCED = "enhanced"
    ENHANCED_NO_ORDER = "enhanced-noorder"
    PAIRWISE = "pairwise"
    CONVENTIONAL = "conventional"

    @classmethod
    def parse(cls, name) -> "SwapPolicy":
        if isinstance(name, cls):
            return name
        key = str(name).lower().replace("_", "-")
        for p in cls:
            if p.value == key:
                return p
        raise ValueError(f"unknown swap policy {name!r}")


@dataclass(frozen=True)
class SwapProposal:
    """Swap ``mu_{uv}^{u'v'}``: u drops v and takes v', u' drops v' and takes v.

    ``None`` plays the hole.  A decoding-order swap has ``u2 == v`` and
    ``v2 == u`` and simply reverses the direction of the matched pair.
    """

    kind: SwapKind
    u: int | None
    v: int | None
    u2: int | None
    v2: int | None
    delta: float = float("nan")

    def apply(self, alpha) -> np.ndarray:
        A = np.array(_alpha(alpha), dtype=np.int8)
        u, v, u2, v2 = self.u, self.v, self.u2, self.v2
        if self.kind is SwapKind.DECODING_ORDER:
            A[u, v], A[v, u] = 0, 1
            return A
        if u is not None and v is not None:
            A[u, v] = 0
        if u2 is not None and v2 is not None:
            A[u2, v2] = 0
        if u is not None and v2 is not None:
            A[u, v2] = 1
        if u2 is not None and v is not None:
            A[u2, v] = 1
        return A

    @property
    def involved(self) -> tuple:
        return tuple(sorted({x for x in (self.u, self.v, self.u2, self.v2) if x is not None}))

    @property
    def label(self) -> str:
        if self.kind is SwapKind.DECODING_ORDER:
            return "order"
        if self.u2 is None:
            return "hole_remove" if self.v2 is None else "hole_add"
        return "transfer" if self.v2 is None else "swap"


@dataclass(frozen=True)
class MatchingState:
    alpha: np.ndarray
    W: np.ndarray
    utilities: np.ndarray
    aux: AuxiliaryBlock | None = None

    @property
    def sum_utility(self) -> float:
        return float(np.sum(self.utilities))

    @property
    def mu(self) -> dict:
        """Matched partners ``{u: [v, ...]}`` that u decodes."""
        K = self.alpha.shape[0]
        return {u: [v for v in range(K) if v != u and self.alpha[u, v]] for u in range(K)}


def _utility_batch(alphas, G, sigma2, below) -> np.ndarray:
    I = interference_matrix(alphas, G, sigma2, below)
    return effective_rates(alphas, np.log2(1.0 + G / I))


def make_state(alpha, W, H, config: SystemConfig) -> MatchingState:
    Hm = _channel(H)
    A = np.array(SicMatrix(np.asarray(_alpha(alpha)).round()).alpha)
    W = _beams(W).copy()
    G = channel_gains(Hm, W)
    I = interference_matrix(A, G, config.noise_power, Hm.below)
    U = effective_rates(A, np.log2(1.0 + G / I))
    for arr in (A, W, U):
        arr.setflags(write=False)
    return MatchingState(A, W, U, AuxiliaryBlock(G, I, np.log2(1.0 + G / I)))


def evaluate_utility(state, H, config: SystemConfig):
    """Per-user utilities (own rate capped by matched decode rates) and their sum."""
    Hm = _channel(H)
    A = np.asarray(_alpha(state.alpha), dtype=float)
    G = channel_gains(Hm, state.W)
    U = _utility_batch(A, G, config.noise_power, Hm.below)
    return U, float(U.sum())


def propose_swaps(state, policy=SwapPolicy.ENHANCED) -> Iterator[SwapProposal]:
    """Feasible swaps in ascending ``(u, u')`` order, the hole first.

    For each u: hole-removals ``mu_{uv}^{00}``, hole-adds ``mu_{u0}^{0v}``, then
    for every other u' the transfers (v' = hole), the two-sided exchanges
    (generated once per unordered {u, u'}) and, under the enhanced policy,
    the decoding-order swap of the pair (u, u') when u decodes u'.
    """
    policy = SwapPolicy.parse(policy)
    A = np.asarray(_alpha(getattr(state, "alpha", state))).round().astype(int)
    K = A.shape[0]
    conv, order = SwapKind.CONVENTIONAL, SwapKind.DECODING_ORDER
    mu = [[v for v in range(K) if v != u and A[u, v]] for u in range(K)]
    for u in range(K):
        for v in mu[u]:
            yield SwapProposal(conv, u, v, None, None)
        for v in range(K):
            if v != u and not A[u, v] and not A[v, u]:
                yield SwapProposal(conv, u, None, None, v)
        for u2 in range(K):
            if u2 == u:
                continue
            for v in mu[u]:
                # transfer of v from u to u'
                if v != u2 and not A[u2, v] and not A[v, u2]:
                    yield SwapProposal(conv, u, v, u2, None)
                if u2 < u:
                    continue
                for v2 in mu[u2]:
                    if (v2 == v or v2 == u or v == u2 or A[u, v2] or A[u2, v]
                            or A[v2, u] or A[v, u2]):
                        continue
                    yield SwapProposal(conv, u, v, u2, v2)
            if policy is SwapPolicy.ENHANCED and A[u, u2]:
                yield SwapProposal(order, u, u2, u2, u)


def _improves(policy, dU: np.ndarray, involved) -> bool:
    if policy in (SwapPolicy.ENHANCED, SwapPolicy.ENHANCED_NO_ORDER):
        return float(dU.sum()) > DELTA_TOL
    d = dU[list(involved)]
    if policy is SwapPolicy.PAIRWISE:
        return float(d.sum()) > DELTA_TOL
    return bool(np.all(d >= -1e-12) and np.any(d > DELTA_TOL))


def _screen(props, state, G, sigma2, below, rmin, policy, chunk=512):
    """First proposal (in stream order) that the policy accepts, with its
    utilities, or ``(None, None)``; also returns how many were evaluated."""
    seen = 0
    batch: list = []

    def flush():
        alphas = np.array([p.apply(state.alpha) for p in batch], dtype=float)
        U = _utility_batch(alphas, G, sigma2, below)
        dU = U - state.utilities
        for j, p in enumerate(batch):
            if np.any(U[j] < rmin - 1e-9):
                continue
            if _improves(policy, dU[j], p.involved):
                return j, U[j]
        return None, None

    for p in props:
        batch.append(p)
        if len(batch) == chunk:
            j, U = flush()
            if j is not None:
                return batch[j], U, seen + j + 1
            seen += len(batch)
            batch = []
    if batch:
        j, U = flush()
        if j is not None:
            return batch[j], U, seen + j + 1
        seen += len(batch)
    return None, None, seen


def accept_swap(proposal: SwapProposal, state: MatchingState, policy, H,
                config: SystemConfig):
    """Apply ``proposal`` at fixed beams if the policy's criterion strictly
    improves; returns ``(accepted, state)`` with the input state on reject."""
    policy = SwapPolicy.parse(policy)
    Hm = _channel(H)
    G = channel_gains(Hm, state.W)
    A_new = proposal.apply(state.alpha)
    U = _utility_batch(A_new.astype(float), G, config.noise_power, Hm.below)
    if np.any(U < config.r_min - 1e-9) or not _improves(policy, U - state.utilities,
                                                          proposal.involved):
        return False, state
    return True, make_state(A_new, state.W, Hm, config)


def swap_pass(state: MatchingState, policy, H, config: SystemConfig, max_accepts=None,
              on_accept=None):
    """First-improvement swap search at fixed beams.

    Scans the proposal stream, applies the first improving swap, and rescans
    from the start until a full scan finds nothing or ``max_accepts``
    (default ``4 K^2``) swaps were applied.  Returns ``(state, accepted)``.
    """
    policy = SwapPolicy.parse(policy)
    Hm = _channel(H)
    K = Hm.num_users
    cap = 4 * K * K if max_accepts is None else max_accepts
    G = channel_gains(Hm, state.W)
    accepted: list = []
    while len(accepted) < cap:
        prop, U, _ = _screen(propose_swaps(state, policy), state, G, config.noise_power,
                             Hm.below, config.r_min, policy)
        if prop is None:
            break
        prop = replace(prop, delta=float(U.sum() - state.sum_utility))
        state = make_state(prop.apply(state.alpha), state.W, Hm, config)
        accepted.append(prop)
        if on_accept is not None:
            on_accept(prop, state)
    return state, accepted


def verify_stability(state, H, config: SystemConfig) -> bool:
    """True when no exchange, hole or decoding-order swap raises the total
    utility at the state's beams."""
    Hm = _channel(H)
    st = state if isinstance(state, MatchingState) else make_state(state.alpha, state.W, Hm, config)
    G = channel_gains(Hm, st.W)
    prop, _, _ = _screen(propose_swaps(st, SwapPolicy.ENHANCED), st, G, config.noise_power,
                         Hm.below, np.full(Hm.num_users, -np.inf), SwapPolicy.ENHANCED)
    return prop is None


# -- outer loop ------------------------------------------------------------

TRACE_HEADER = ("outer_iter", "inner_iter", "event", "sum_utility", "sum_rate")


@dataclass
class MatchingResult:
    alpha: SicMatrix
    W: BeamMatrix
    report: RateReport
    trace: list
    objectives: list          # total utility after each outer iteration (index 0: start)
    swap_utilities: list      # total utility after each accepted swap, per outer pass
    inner_solves: int
    outer_iters: int
    natural: bool             # stopped by the objective criterion
    stable: bool
    failed: bool = False
    state: MatchingState | None = None
    pass_starts: list = field(default_factory=list)   # total utility entering each swap pass

    @property
    def sum_rate(self) -> float:
        return self.report.effective_sum_rate


def run_matching_sca(config: SystemConfig, H, policy=SwapPolicy.ENHANCED,
                     W_init=None) -> MatchingResult:
    """Alternate ``l_max`` SCA solves with one swap pass until the squared change
    of the total utility is at most ``eps_msca`` or ``t_msca_max`` passes."""
    policy = SwapPolicy.parse(policy)
    Hm = _channel(H)
    K, M = Hm.num_users, Hm.num_antennas
    if W_init is None:
        W_init = random_beams(np.random.default_rng(config.rng_seed), M, K, config.power_budget)
    state = make_state(np.eye(K), W_init, Hm, config)
    trace: list = []
    objectives = [state.sum_utility]
    swap_utilities: list = []
    pass_starts: list = []
    inner = 0
    natural = failed = False
    t = 0

    def raw_sum(st):
        G = channel_gains(Hm, st.W)
        return float(np.trace(np.log2(1.0 + G / st.aux.I)))

    while t < config.t_msca_max:
        t += 1
        sca = run_sca_beamforming(state.alpha, Hm, config, state.W, config.l_max)
        if sca.failed:
            failed = True
            break
        for j, (obj, own) in enumerate(zip(sca.objectives[1:], sca.own_sums[1:]), start=1):
            trace.append((t, inner + j, "sca", obj, own))
        inner += sca.solves
        state = make_state(state.alpha, sca.W, Hm, config)
        pass_starts.append(state.sum_utility)
        pass_utils: list = []

        def log(prop, st):
            pass_utils.append(st.sum_utility)
            trace.append((t, inner, prop.kind.value, st.sum_utility, raw_sum(st)))

        state, accepted = swap_pass(state, policy, Hm, config, on_accept=log)
        trace.append((t, inner, "reject", state.sum_utility, raw_sum(state)))
        swap_utilities.append(pass_utils)
        objectives.append(state.sum_utility)
        if (objectives[-1] - objectives[-2]) ** 2 <= config.eps_msca:
            natural = True
            break

    report = rate_report(state.alpha, state.W, Hm, config)
    return MatchingResult(
        alpha=SicMatrix(state.alpha), W=BeamMatrix(state.W, config.power_budget),
        report=report, trace=trace, objectives=objectives, swap_utilities=swap_utilities,
        inner_solves=inner, outer_iters=t, natural=natural,
        stable=verify_stability(state, Hm, config), failed=failed, state=state,
        pass_starts=pass_starts)
