"""ADMM-SCA: relaxed SIC matrix with an augmented-Lagrangian binary penalty.

The binary SIC matrix is relaxed to ``alpha in [0, 1]`` together with its
complement ``beta``; the couplings ``beta = 1 - alpha`` and ``alpha * beta = 0``
are enforced through scaled augmented-Lagrangian terms.  Each iteration
solves the ``(alpha, W, S, I, r)`` block and the ``(beta, I, r)`` block, both
linearised at the current iterate, then takes a dual step.  The relaxed
solution is rounded and its beams polished at the rounded SIC matrix.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .conic import Status, solve
from .kernel import AuxiliaryBlock, aux_from, beams_from, build_alpha_w_problem, build_beta_problem
from .matching import run_sca_beamforming
from .system import (
    BeamMatrix, RateReport, SicMatrix, SystemConfig, _channel, channel_gains, random_beams,
    rate_report,
)

__all__ = [
    "AdmmState", "AdmmRecord", "AdmmResult", "init_state", "admm_iterate", "dual_update",
    "augmented_lagrangian", "residuals", "round_alpha", "run_admm_sca", "run_admm_start",
    "TRACE_HEADER",
]

TRACE_HEADER = ("iteration", "objective", "residual_eq11", "residual_eq12", "status", "ms")


@dataclass(frozen=True)
class AdmmState:
    alpha: np.ndarray
    beta: np.ndarray
    W: np.ndarray
    aux: AuxiliaryBlock
    lam: np.ndarray
    lam_t: np.ndarray
    rho: float
    t: int = 0

    @property
    def objective(self) -> float:
        return float(np.trace(self.aux.r))


@dataclass(frozen=True)
class AdmmRecord:
    iteration: int
    objective: float
    residual_eq11: float
    residual_eq12: float
    status: str
    ms: float
    al_after_alpha: float = float("nan")
    al_after_beta: float = float("nan")
    al_before: float = float("nan")

    def row(self) -> tuple:
        return (self.iteration, self.objective, self.residual_eq11, self.residual_eq12,
                self.status, self.ms)


def _offdiag_mask(K):
    return ~np.eye(K, dtype=bool)


def residuals(alpha, beta) -> tuple[float, float]:
    """``max |beta + alpha - 1|`` and ``max |alpha * beta|`` over off-diagonal pairs."""
    A, B = np.asarray(alpha, float), np.asarray(beta, float)
    off = _offdiag_mask(A.shape[0])
    if not off.any():
        return 0.0, 0.0
    return float(np.max(np.abs(B + A - 1.0)[off])), float(np.max(np.abs(A * B)[off]))


def augmented_lagrangian(state: AdmmState) -> float:
    """``sum_k r_kk`` minus both scaled penalty terms."""
    A, B = state.alpha, state.beta
    off = _offdiag_mask(A.shape[0])
    rho = state.rho
    p1 = np.sum(((B + A - 1.0 + rho * state.lam)[off]) ** 2)
    p2 = np.sum(((A * B + rho * state.lam_t)[off]) ** 2)
    return state.objective - (p1 + p2) / (2.0 * rho)


def dual_update(alpha, beta, lam, lam_t, rho: float):
    """``lam += (beta + alpha - 1) / rho`` and ``lam_t += alpha * beta / rho``."""
    A, B = np.asarray(alpha, float), np.asarray(beta, float)
    off = _offdiag_mask(A.shape[0])
    lam = np.array(lam, dtype=float)
    lam_t = np.array(lam_t, dtype=float)
    lam[off] += (B + A - 1.0)[off] / rho
    lam_t[off] += (A * B)[off] / rho
    return lam, lam_t


def init_state(config: SystemConfig, H, seed: int) -> AdmmState:
    """Random full-power beams and a random relaxed SIC matrix.

    Off-diagonal ``alpha`` entries are uniform on ``[0, 0.5]`` so that
    ``alpha_ik + alpha_ki <= 1`` holds; ``beta = 1 - alpha`` and the auxiliary
    block is tight at the start, duals are zero.
    """
    Hm = _channel(H)
    K, M = Hm.num_users, Hm.num_antennas
    rng = np.random.default_rng(seed)
    W = random_beams(rng, M, K, config.power_budget)
    A = rng.uniform(0.0, 0.5, size=(K, K))
    np.fill_diagonal(A, 1.0)
    B = 1.0 - A
    aux = AuxiliaryBlock.exact(A, W, Hm, config.noise_power, beta=B)
    Z = np.zeros((K, K))
    return AdmmState(A, B, W, aux, Z, Z.copy(), float(config.rho), 0)


def admm_iterate(state: AdmmState, H, config: SystemConfig):
    """One ADMM-SCA iteration; returns ``(new_state, record)``.

    On a failed subproblem the input state is returned unchanged and the
    record carries the failing status.
    """
    Hm = _channel(H)
    t0 = time.perf_counter()
    K = Hm.num_users
    al0 = augmented_lagrangian(state)
    p27 = build_alpha_w_problem(state, Hm, config)
    res = solve(p27)
    if not res.ok:
        return state, _failed(state, res.status, "alpha_w", t0, al0)
    A = np.eye(K)
    A[_offdiag_mask(K)] = np.clip(res["alpha"], 0.0, 1.0)
    W = beams_from(p27, res)
    aux = aux_from(p27, res)
    mid = replace(state, alpha=A, W=W, aux=aux)
    al1 = augmented_lagrangian(mid)

    p29 = build_beta_problem(mid, Hm, config)
    res = solve(p29)
    if not res.ok:
        return state, _failed(state, res.status, "beta", t0, al0)
    B = np.zeros((K, K))
    B[_offdiag_mask(K)] = np.clip(res["beta"], 0.0, 1.0)
    aux = AuxiliaryBlock(aux.S, np.asarray(res["I"], float), np.asarray(res["r"], float))
    after = replace(mid, beta=B, aux=aux)
    al2 = augmented_lagrangian(after)

    lam, lam_t = dual_update(A, B, state.lam, state.lam_t, state.rho)
    new = replace(after, lam=lam, lam_t=lam_t, t=state.t + 1)
    e11, e12 = residuals(A, B)
    rec = AdmmRecord(new.t, new.objective, e11, e12, Status.OPTIMAL.value,
                     1e3 * (time.perf_counter() - t0), al1, al2, al0)
    return new, rec


def _failed(state, status, block, t0, al0):
    e11, e12 = residuals(state.alpha, state.beta)
    return AdmmRecord(state.t + 1, state.objective, e11, e12, f"{status.value}:{block}",
                      1e3 * (time.perf_counter() - t0), al_before=al0)


def round_alpha(alpha) -> np.ndarray:
    """Threshold at 0.5; for a pair with both directions set keep the larger
    relaxed value; unit diagonal."""
    A = np.asarray(alpha, dtype=float)
    K = A.shape[0]
    out = (A >= 0.5).astype(np.int8)
    for i in range(K):
        for k in range(i + 1, K):
            if out[i, k] and out[k, i]:
                if A[i, k] >= A[k, i]:
                    out[k, i] = 0
                else:
                    out[i, k] = 0
    np.fill_diagonal(out, 1)
    return out


@dataclass
class StartResult:
    seed: int
    records: list
    state: AdmmState
    alpha: np.ndarray          # rounded
    W: np.ndarray              # polished
    report: RateReport | None
    converged: bool            # stopped by the objective criterion
    all_optimal: bool
    polish_solves: int = 0

    @property
    def sum_rate(self) -> float:
        return self.report.effective_sum_rate if self.report is not None else -np.inf

    @property
    def feasible(self) -> bool:
        return self.report is not None and bool(
            np.all(self.report.effective_rate >= self._rmin - 1e-9))

    _rmin: np.ndarray = field(default=None, repr=False)


def run_admm_start(config: SystemConfig, H, seed: int) -> StartResult:
    """One ADMM-SCA run from ``init_state(config, H, seed)``.

    Stops once the squared change of ``sum_k r_kk`` is at most ``eps_admm``
    and both coupling residuals are at most ``eps_residual``, after
    ``t_admm_max`` iterations, or on a failed subproblem.  The rounded SIC
    matrix then gets SCA beamforming to convergence (``eps_sca``, at most
    ``sca_max_passes`` solves).
    """
    Hm = _channel(H)
    state = init_state(config, Hm, seed)
    records: list = []
    prev = state.objective
    converged, all_ok = False, True
    for _ in range(config.t_admm_max):
        state, rec = admm_iterate(state, Hm, config)
        records.append(rec)
        if rec.status != Status.OPTIMAL.value:
            all_ok = False
            break
        if ((rec.objective - prev) ** 2 <= config.eps_admm
                and max(rec.residual_eq11, rec.residual_eq12) <= config.eps_residual):
            converged = True
            break
        prev = rec.objective
    A = round_alpha(state.alpha)
    # polish at the rounded alpha with the same convergence rule as the baselines
    sca = run_sca_beamforming(A, Hm, config, state.W, config.sca_max_passes, tol=config.eps_sca)
    report = None if sca.failed else rate_report(A, sca.W, Hm, config)
    return StartResult(seed, records, state, A, sca.W, report, converged, all_ok,
                       sca.solves, config.r_min)


@dataclass
class AdmmResult:
    alpha: SicMatrix
    W: BeamMatrix
    report: RateReport
    trace: list                # records of the selected start
    starts: list               # every StartResult
    best: int
    fallback: bool = False

    @property
    def sum_rate(self) -> float:
        return self.report.effective_sum_rate

    @property
    def iterations(self) -> int:
        return sum(len(s.records) for s in self.starts)


def run_admm_sca(config: SystemConfig, H, n_ini: int | None = None) -> AdmmResult:
    """Best of ``n_ini`` (default ``config.n_ini``) ADMM-SCA starts seeded by
    ``rng_seed + j``; falls back to SDMA (identity SIC) when no start ends
    feasible after rounding."""
    Hm = _channel(H)
    n = config.n_ini if n_ini is None else n_ini
    starts = [run_admm_start(config, Hm, config.rng_seed + j) for j in range(max(n, 1))]
    feas = [j for j, s in enumerate(starts) if s.feasible]
    if feas:
        best = max(feas, key=lambda j: starts[j].sum_rate)
        s = starts[best]
        return AdmmResult(SicMatrix(s.alpha), BeamMatrix(s.W, config.power_budget), s.report,
                          s.records, starts, best)
    from .baselines import solve_sdma

    sd = solve_sdma(config, Hm)
    return AdmmResult(sd.alpha, sd.W, sd.report, [], starts, -1, fallback=True)
