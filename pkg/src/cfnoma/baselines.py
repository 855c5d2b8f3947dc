"""Reference schemes (SDMA, BB-NOMA, CB-NOMA, enhanced CB-NOMA) and the
exhaustive-search oracle over SIC matrices.

All of them share :func:`~cfnoma.matching.run_sca_beamforming`; they differ
only in the fixed SIC matrix and, for plain CB-NOMA, in tying the beams of a
cluster to one shared direction.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .kernel import BeamMap
from .matching import run_sca_beamforming
from .system import (
    BeamMatrix, RateReport, SicMatrix, SystemConfig, _channel, matched_filter, random_beams,
    rate_report, scheme_alpha,
)

__all__ = [
    "ClusterPartition", "SchemeResult", "cluster_users", "solve_sdma", "solve_bb_noma",
    "solve_cb_noma", "solve_enhanced_cb_noma", "exhaustive_search_sca",
    "enumerate_sic_matrices", "EXHAUSTIVE_MAX_USERS", "CB_ROUNDS",
]

EXHAUSTIVE_MAX_USERS = 5
CB_ROUNDS = 5
CB_PASSES = 10     # SCA passes per direction / power update
EXHAUSTIVE_RESTARTS = 3


@dataclass(frozen=True)
class ClusterPartition:
    """Disjoint user groups covering every user; each group is listed in
    ascending gain order, which is also its SIC order."""

    clusters: tuple

    def __post_init__(self):
        groups = tuple(tuple(int(k) for k in g) for g in self.clusters)
        seen = [k for g in groups for k in g]
        if any(len(g) == 0 for g in groups) or len(seen) != len(set(seen)):
            raise ValueError("clusters must be non-empty and disjoint")
        if sorted(seen) != list(range(len(seen))):
            raise ValueError("clusters must cover users 0..K-1")
        object.__setattr__(self, "clusters", groups)

    @property
    def num_users(self) -> int:
        return sum(len(g) for g in self.clusters)

    def labels(self) -> np.ndarray:
        lab = np.empty(self.num_users, dtype=int)
        for g, members in enumerate(self.clusters):
            lab[list(members)] = g
        return lab

    @property
    def singletons(self) -> bool:
        return all(len(g) == 1 for g in self.clusters)


@dataclass
class SchemeResult:
    alpha: SicMatrix
    W: BeamMatrix
    report: RateReport
    solves: int = 0
    failed: bool = False
    partition: ClusterPartition | None = None
    candidates: int = 1
    extra: dict = field(default_factory=dict)

    @property
    def sum_rate(self) -> float:
        return self.report.effective_sum_rate


def _correlation(h):
    n = np.linalg.norm(h, axis=1)
    return np.abs(h.conj() @ h.T) / np.outer(n, n)


def cluster_users(H, tau: float = 0.7, max_size: int | None = None) -> ClusterPartition:
    """Greedy correlation clustering.

    Users are visited from the strongest down.  Each joins the open cluster
    whose head (its first, strongest member) is most correlated with it, if
    that correlation is at least ``tau`` and the cluster has room; otherwise
    it heads a new cluster.
    """
    if not 0.0 < tau < 1.0:
        raise ValueError("tau must lie in (0, 1)")
    Hm = _channel(H)
    K, M = Hm.num_users, Hm.num_antennas
    cap = math.ceil(K / M) if max_size is None else int(max_size)
    C = _correlation(Hm.h)
    heads: list[int] = []
    members: list[list[int]] = []
    for k in Hm.gain_order[::-1]:
        best, best_c = None, -1.0
        for g, head in enumerate(heads):
            if len(members[g]) < cap and C[k, head] >= tau and C[k, head] > best_c:
                best, best_c = g, C[k, head]
        if best is None:
            heads.append(int(k))
            members.append([int(k)])
        else:
            members[best].append(int(k))
    rank = Hm.rank
    groups = [tuple(sorted(m, key=lambda u: rank[u])) for m in members]
    groups.sort(key=lambda g: g[0])
    return ClusterPartition(tuple(groups))


def _to_convergence(alpha, Hm, config, W0, beam_map=None, cap=None):
    return run_sca_beamforming(alpha, Hm, config, W0, cap or config.sca_max_passes,
                               tol=config.eps_sca, beam_map=beam_map)


def _result(alpha, W, Hm, config, solves, failed, **kw) -> SchemeResult:
    return SchemeResult(SicMatrix(alpha), BeamMatrix(W, config.power_budget),
                        rate_report(alpha, W, Hm, config), solves, failed, **kw)


def _fixed_alpha(alpha, Hm, config, W0=None) -> SchemeResult:
    W0 = matched_filter(Hm, config.power_budget) if W0 is None else W0
    sca = _to_convergence(alpha, Hm, config, W0)
    return _result(alpha, sca.W, Hm, config, sca.solves, sca.failed)


def solve_sdma(config: SystemConfig, H) -> SchemeResult:
    Hm = _channel(H)
    return _fixed_alpha(scheme_alpha("SDMA", Hm), Hm, config)


def solve_bb_noma(config: SystemConfig, H) -> SchemeResult:
    Hm = _channel(H)
    return _fixed_alpha(scheme_alpha("BB_NOMA", Hm), Hm, config)


def solve_enhanced_cb_noma(config: SystemConfig, H, partition=None) -> SchemeResult:
    """Cluster-induced SIC chains with a dedicated beam per user."""
    Hm = _channel(H)
    partition = partition or cluster_users(Hm, config.cluster_tau)
    res = _fixed_alpha(scheme_alpha("CB_NOMA", Hm, partition), Hm, config)
    res.partition = partition
    return res


def _direction_map(s, labels, M, K) -> BeamMap:
    """``w_k = s_k d_g``: variables are the shared complex directions d_g."""
    G = labels.max() + 1
    T = np.zeros((2, M, K, 2, M, G))   # (re/im of W)[m, k] <- (re/im of d)[m, g]
    for k in range(K):
        g = labels[k]
        for m in range(M):
            T[0, m, k, 0, m, g] = s[k]
            T[1, m, k, 1, m, g] = s[k]
    return BeamMap(T.reshape(2 * M * K, 2 * M * G), np.zeros(2 * M * K))


def _power_map(D, labels, M, K) -> BeamMap:
    """``w_k = s_k d_g``: variables are the real amplitudes s_k."""
    T = np.zeros((2, M, K, K))
    for k in range(K):
        d = D[:, labels[k]]
        T[0, :, k, k] = d.real
        T[1, :, k, k] = d.imag
    return BeamMap(T.reshape(2 * M * K, K), np.zeros(2 * M * K))


def _split(W, labels):
    """Shared unit directions and per-user amplitudes of tied beams."""
    M, K = W.shape
    G = labels.max() + 1
    D = np.zeros((M, G), dtype=complex)
    s = np.zeros(K)
    for g in range(G):
        ks = np.flatnonzero(labels == g)
        k0 = ks[np.argmax(np.linalg.norm(W[:, ks], axis=0))]
        n0 = np.linalg.norm(W[:, k0])
        D[:, g] = W[:, k0] / n0 if n0 > 0 else 0.0
        s[ks] = np.real(D[:, g].conj() @ W[:, ks])
    return D, s


def solve_cb_noma(config: SystemConfig, H, partition=None) -> SchemeResult:
    """Plain CB-NOMA: one shared beam direction per cluster.

    Directions and amplitudes are updated in turn, each by SCA on the
    beamforming surrogate restricted through a linear beam map, for
    ``CB_ROUNDS`` rounds.  An all-singleton partition imposes no tying and is
    solved exactly like SDMA.
    """
    Hm = _channel(H)
    partition = partition or cluster_users(Hm, config.cluster_tau)
    if partition.singletons:
        res = solve_sdma(config, Hm)
        res.partition = partition
        return res
    K, M = Hm.num_users, Hm.num_antennas
    A = scheme_alpha("CB_NOMA", Hm, partition)
    labels = partition.labels()
    G = labels.max() + 1
    D = np.zeros((M, G), dtype=complex)
    for g in range(G):
        # dominant eigenvector of the cluster's channel covariance
        hs = Hm.h[labels == g]
        _, V = np.linalg.eigh(hs.T @ hs.conj())
        D[:, g] = V[:, -1]
    s = np.full(K, np.sqrt(config.power_budget / K))
    W = D[:, labels] * s
    solves = 0
    for _ in range(CB_ROUNDS):
        # a step that cannot meet the floors still hands on its closest point
        sca = _to_convergence(A, Hm, config, W, _direction_map(s, labels, M, K), CB_PASSES)
        solves += sca.solves
        W = sca.W
        D, s = _split(W, labels)
        sca = _to_convergence(A, Hm, config, W, _power_map(D, labels, M, K), CB_PASSES)
        solves += sca.solves
        W = sca.W
        D, s = _split(W, labels)
        W = D[:, labels] * s
    res = _result(A, W, Hm, config, solves, False, partition=partition)
    res.failed = bool(np.any(res.report.effective_rate < config.r_min - 1e-9))
    return res


def enumerate_sic_matrices(K: int):
    """Every SIC matrix: each unordered pair is unmatched, i->k or k->i."""
    pairs = [(i, k) for i in range(K) for k in range(i + 1, K)]
    for choice in itertools.product(range(3), repeat=len(pairs)):
        A = np.eye(K, dtype=np.int8)
        for (i, k), c in zip(pairs, choice):
            if c == 1:
                A[i, k] = 1
            elif c == 2:
                A[k, i] = 1
        yield A


def exhaustive_search_sca(config: SystemConfig, H, restarts: int = EXHAUSTIVE_RESTARTS,
                          progress=None) -> SchemeResult:
    """Best SIC matrix by enumeration, each candidate beamformed by SCA to
    convergence from the matched filter and ``restarts - 1`` random starts."""
    Hm = _channel(H)
    K, M = Hm.num_users, Hm.num_antennas
    if K > EXHAUSTIVE_MAX_USERS:
        raise ValueError(
            f"exhaustive search needs 3^(K(K-1)/2) candidates; K={K} exceeds "
            f"the limit K <= {EXHAUSTIVE_MAX_USERS}")
    rmin = config.r_min
    best, best_val, solves, n = None, -np.inf, 0, 0
    for idx, A in enumerate(enumerate_sic_matrices(K)):
        n += 1
        rng = np.random.default_rng([config.rng_seed, idx])
        starts = [matched_filter(Hm, config.power_budget)] + [
            random_beams(rng, M, K, config.power_budget) for _ in range(restarts - 1)]
        for W0 in starts:
            sca = _to_convergence(A, Hm, config, W0)
            solves += sca.solves
            rep = rate_report(A, sca.W, Hm, config)
            if np.any(rep.effective_rate < rmin - 1e-9):
                continue
            if rep.effective_sum_rate > best_val:
                best, best_val = (A, sca.W), rep.effective_sum_rate
        if progress is not None:
            progress(idx)
    if best is None:
        A = np.eye(K, dtype=np.int8)
        res = _fixed_alpha(A, Hm, config)
        res.failed, res.candidates, res.solves = True, n, solves + res.solves
        return res
    return _result(best[0], best[1], Hm, config, solves, False, candidates=n)
