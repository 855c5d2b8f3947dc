"""Downlink MISO system model with cluster-free SIC.

Users are indexed so that channel gains ``||h_k||^2`` are ascending; every
function that needs the "weaker than" relation between two users reads it from
``ChannelMatrix.gain_order`` so callers may also pass unsorted channels.

Conventions
-----------
* ``h`` is stored as a ``(K, M)`` complex array, row ``k`` is ``h_k``.
* ``w`` is stored as a ``(M, K)`` complex array, column ``k`` is ``w_k``.
* ``alpha[i, k] = 1`` means user ``i`` decodes (and removes) user ``k``'s
  signal before decoding its own.  The diagonal is fixed to one.
* All powers are linear (watts), all rates are in bits/s/Hz.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

__all__ = [
    "SystemConfig", "ChannelMatrix", "SicMatrix", "BeamMatrix", "RateReport",
    "FEAS_TOL", "channel_gains", "correlation_matrix", "draw_channel",
    "generate_channel", "interference_own", "interference_decode",
    "interference_matrix", "rate_matrix", "rate_report", "effective_rates",
    "baseline_rate_formula", "scheme_alpha", "sic_complexity",
    "matched_filter", "random_beams",
]

FEAS_TOL = 1e-9


@dataclass(frozen=True)
class SystemConfig:
    """Antenna/user counts, power calibration and algorithm budgets.

    ``power_budget`` defaults to ``10**(snr_db/10)`` with unit noise power, so
    only the ratio ``P_max / sigma2`` matters for every rate in the package.
    """

    num_antennas: int = 4
    num_users: int = 3
    snr_db: float = 20.0
    power_budget: float | None = None
    noise_power: float = 1.0
    min_rates: Sequence[float] | None = None
    corr: float = 0.0
    rng_seed: int = 0
    # ADMM-SCA
    rho: float = 1.0
    eps_admm: float = 1e-4
    t_admm_max: int = 100
    n_ini: int = 20
    eps_residual: float = 1e-3
    # Matching-SCA
    eps_msca: float = 1e-4
    t_msca_max: int = 20
    l_max: int = 3
    # SCA to convergence (baselines, oracle)
    eps_sca: float = 1e-5
    sca_max_passes: int = 30
    # CB-NOMA clustering
    cluster_tau: float = 0.7

    def __post_init__(self):
        if self.num_antennas < 1 or self.num_users < 1:
            raise ValueError("need at least one antenna and one user")
        if self.power_budget is None:
            object.__setattr__(self, "power_budget", 10.0 ** (self.snr_db / 10.0))
        if not self.power_budget > 0 or not self.noise_power > 0:
            raise ValueError("power budget and noise power must be positive")
        if not 0.0 <= self.corr < 0.999:
            raise ValueError(f"corr must lie in [0, 0.999), got {self.corr}")
        rmin = np.zeros(self.num_users) if self.min_rates is None else np.asarray(
            self.min_rates, dtype=float)
        if rmin.shape != (self.num_users,) or np.any(rmin < 0):
            raise ValueError("min_rates must hold K non-negative values")
        object.__setattr__(self, "min_rates", tuple(float(x) for x in rmin))
        if self.l_max < 1:
            raise ValueError("l_max must be >= 1")
        if not self.rho > 0:
            raise ValueError("rho must be positive")
        if not 0.0 < self.cluster_tau < 1.0:
            raise ValueError("cluster_tau must lie in (0, 1)")

    @property
    def r_min(self) -> np.ndarray:
        return np.asarray(self.min_rates, dtype=float)

    def replace(self, **changes) -> "SystemConfig":
        from dataclasses import replace

        if "num_users" in changes and "min_rates" not in changes:
            changes["min_rates"] = None
        return replace(self, **changes)


@dataclass(frozen=True)
class ChannelMatrix:
    """Channel rows ``h[k]`` plus the ascending-gain permutation.

    ``gain_order[j]`` is the index of the j-th weakest user (stable sort, so
    ties keep their original order).  ``rank`` is its inverse.
    """

    h: np.ndarray
    gain_order: np.ndarray = field(init=False)

    def __post_init__(self):
        h = np.array(self.h, dtype=complex)
        if h.ndim != 2 or not np.all(np.isfinite(h)):
            raise ValueError("channel must be a finite (K, M) array")
        h.setflags(write=False)
        object.__setattr__(self, "h", h)
        order = np.argsort(np.sum(np.abs(h) ** 2, axis=1), kind="stable")
        order.setflags(write=False)
        object.__setattr__(self, "gain_order", order)

    @property
    def num_users(self) -> int:
        return self.h.shape[0]

    @property
    def num_antennas(self) -> int:
        return self.h.shape[1]

    @property
    def norms2(self) -> np.ndarray:
        return np.sum(np.abs(self.h) ** 2, axis=1)

    @property
    def rank(self) -> np.ndarray:
        rank = np.empty(self.num_users, dtype=int)
        rank[self.gain_order] = np.arange(self.num_users)
        return rank

    @property
    def below(self) -> np.ndarray:
        """``below[u, k]`` is True when user u precedes user k in gain order."""
        rank = self.rank
        return rank[:, None] < rank[None, :]

    def sorted(self) -> "ChannelMatrix":
        return ChannelMatrix(self.h[self.gain_order])

    def to_text(self) -> str:
        """Row-major interleaved ``re im`` pairs, one user per line."""
        lines = []
        for row in self.h:
            pairs = np.column_stack([row.real, row.imag]).ravel()
            lines.append(" ".join(repr(float(x)) for x in pairs))
        return "\n".join(lines)

    @classmethod
    def from_text(cls, text: str) -> "ChannelMatrix":
        rows = [np.array(line.split(), dtype=float) for line in text.strip().splitlines()]
        return cls(np.array([r[0::2] + 1j * r[1::2] for r in rows]))


@dataclass(frozen=True)
class SicMatrix:
    """Binary SIC indicators with unit diagonal and mutual exclusion."""

    alpha: np.ndarray

    def __post_init__(self):
        a = np.array(self.alpha)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError("alpha must be square")
        if not np.all((a == 0) | (a == 1)):
            raise ValueError("alpha must be binary")
        a = a.astype(np.int8)
        if not np.all(np.diag(a) == 1):
            raise ValueError("alpha diagonal must be one (users decode themselves)")
        off = a + a.T
        np.fill_diagonal(off, 0)
        if np.any(off > 1):
            i, k = np.argwhere(off > 1)[0]
            raise ValueError(f"users {i} and {k} cannot decode each other")
        a.setflags(write=False)
        object.__setattr__(self, "alpha", a)

    @classmethod
    def identity(cls, K: int) -> "SicMatrix":
        return cls(np.eye(K, dtype=np.int8))

    @property
    def num_users(self) -> int:
        return self.alpha.shape[0]

    def pairs(self) -> list[tuple[int, int]]:
        """Active directed SIC operations ``(i, k)``, ``i != k``."""
        a = self.alpha.copy()
        np.fill_diagonal(a, 0)
        return [tuple(map(int, p)) for p in np.argwhere(a == 1)]


@dataclass(frozen=True)
class BeamMatrix:
    """Transmit beams ``w[:, k]`` under the total power budget."""

    w: np.ndarray
    power_budget: float | None = None

    def __post_init__(self):
        w = np.array(self.w, dtype=complex)
        if w.ndim != 2 or not np.all(np.isfinite(w)):
            raise ValueError("beams must be a finite (M, K) array")
        if self.power_budget is not None and self.power > self.power_budget + FEAS_TOL * max(
                1.0, self.power_budget):
            raise ValueError(f"total power {self.power:.6g} exceeds {self.power_budget:.6g}")
        w.setflags(write=False)
        object.__setattr__(self, "w", w)

    @property
    def power(self) -> float:
        return float(np.sum(np.abs(self.w) ** 2))


@dataclass(frozen=True)
class RateReport:
    """Rates of one (alpha, W) operating point.

    ``sum_rate`` adds the own-signal rates.  ``effective_rate`` additionally
    caps each user by the rates at which its SIC decoders can read it, which
    is the rate the BS can actually deliver; ``effective_sum_rate`` is what all
    solvers in this package maximise and compare.
    """

    rate_own: np.ndarray
    rate_decode: np.ndarray
    sum_rate: float
    sic_feasible: bool
    min_rate_feasible: bool
    effective_rate: np.ndarray
    sic_violations: tuple = ()

    @property
    def effective_sum_rate(self) -> float:
        return float(np.sum(self.effective_rate))

    @property
    def min_rate(self) -> float:
        return float(np.min(self.effective_rate))


def _alpha(alpha) -> np.ndarray:
    return np.asarray(getattr(alpha, "alpha", alpha), dtype=float)


def _beams(W) -> np.ndarray:
    return np.asarray(getattr(W, "w", W), dtype=complex)


def _channel(H) -> ChannelMatrix:
    return H if isinstance(H, ChannelMatrix) else ChannelMatrix(H)


def channel_gains(H, W) -> np.ndarray:
    """``G[i, u] = |h_i^H w_u|^2``."""
    h = _channel(H).h
    return np.abs(h.conj() @ _beams(W)) ** 2


def correlation_matrix(K: int, corr: float, phi: float = 0.0) -> np.ndarray:
    """Hermitian Toeplitz user correlation ``R[i, j] = c^(j-i)`` for ``j >= i``."""
    c = corr * np.exp(1j * phi)
    idx = np.arange(K)
    lag = idx[None, :] - idx[:, None]
    R = np.where(lag >= 0, c ** np.abs(lag), np.conj(c) ** np.abs(lag))
    return R.astype(complex)


def _psd_sqrt(R: np.ndarray) -> np.ndarray:
    R = 0.5 * (R + R.conj().T)
    lam, V = np.linalg.eigh(R)
    if lam.min() < 0:
        # numerically degenerate correlation: clamp and put unit diagonal back
        R = (V * np.clip(lam, 0, None)) @ V.conj().T
        d = np.sqrt(np.real(np.diag(R)))
        R = R / np.outer(d, d)
        lam, V = np.linalg.eigh(0.5 * (R + R.conj().T))
    return (V * np.sqrt(np.clip(lam, 0, None))) @ V.conj().T


def draw_channel(rng: np.random.Generator, M: int, K: int, corr: float):
    """Draw one correlated Rayleigh realisation.

    Returns ``(h, h_tilde, R)`` where ``h`` is ``(K, M)`` in draw order (not yet
    sorted by gain), ``h_tilde`` the i.i.d. CN(0, 1) draw and ``R`` the user
    correlation used.
    """
    Ht = (rng.standard_normal((M, K)) + 1j * rng.standard_normal((M, K))) / np.sqrt(2)
    phi = rng.uniform(0.0, 2 * np.pi)
    R = correlation_matrix(K, corr, phi)
    if corr == 0.0:
        H = Ht
    else:
        H = Ht @ _psd_sqrt(R)
    return H.T.copy(), Ht.T.copy(), R


def generate_channel(config: SystemConfig, seed: int) -> ChannelMatrix:
    """Correlated channel for ``config`` sorted by ascending gain."""
    rng = np.random.default_rng(seed)
    h, _, _ = draw_channel(rng, config.num_antennas, config.num_users, config.corr)
    return ChannelMatrix(h).sorted()


def interference_matrix(alpha, G: np.ndarray, sigma2: float, below: np.ndarray) -> np.ndarray:
    """All interference levels at once.

    Entry ``[k, k]`` is the interference seen by user k when decoding itself,
    entry ``[i, k]`` (i != k) the interference at user i when decoding user k,
    both under the (possibly fractional) polynomial form of ``alpha``.
    Accepts a leading batch axis on ``alpha``.
    """
    A = np.asarray(alpha, dtype=float)
    K = G.shape[0]
    # coefficient tensor C[..., i, k, u]
    Aiu = A[..., :, None, :]                 # alpha[i, u]
    Auk = np.swapaxes(A, -1, -2)[..., None, :, :]  # alpha[u, k] indexed [k, u]
    Aku = A[..., None, :, :]                 # alpha[k, u]
    low = 1.0 - Aiu + Aiu * Auk
    high = 1.0 - Aiu * Aku
    b = below.T[None, :, :]                  # below[u, k] indexed [k, u]
    C = np.where(b, low, high)
    eye = np.eye(K, dtype=bool)
    own = 1.0 - A                            # [k, u] -> 1 - alpha[k, u]
    C = np.where(eye[:, :, None], own[..., None, :, :], C)
    C = np.where(eye[None, :, :], 0.0, C)    # u == k never interferes
    return np.einsum("...iku,iu->...ik", C, G) + sigma2


def interference_own(alpha, W, H, sigma2: float) -> np.ndarray:
    """Interference each user sees when decoding its own signal."""
    A = _alpha(alpha)
    G = channel_gains(H, W)
    off = G * (1.0 - A)
    np.fill_diagonal(off, 0.0)
    return off.sum(axis=1) + sigma2


def interference_decode(alpha, W, H, sigma2: float, i: int, k: int) -> float:
    """Interference at user ``i`` while it decodes user ``k`` (``i != k``)."""
    if i == k:
        raise ValueError("i == k: use interference_own")
    Hm = _channel(H)
    A = _alpha(alpha)
    G = channel_gains(Hm, W)
    below = Hm.below
    total = sigma2
    for u in range(Hm.num_users):
        if u == k:
            continue
        if below[u, k]:
            coeff = 1.0 - A[i, u] + A[i, u] * A[u, k]
        else:
            coeff = 1.0 - A[i, u] * A[k, u]
        total += coeff * G[i, u]
    return float(total)


def rate_matrix(alpha, W, H, sigma2: float) -> np.ndarray:
    """``R[i, k] = log2(1 + SINR_{i->k})``; diagonal holds own rates."""
    Hm = _channel(H)
    G = channel_gains(Hm, W)
    I = interference_matrix(_alpha(alpha), G, sigma2, Hm.below)
    return np.log2(1.0 + G / I)


def effective_rates(alpha, R: np.ndarray) -> np.ndarray:
    """Own rate capped by every active SIC decode rate (batched over alpha)."""
    A = np.asarray(alpha, dtype=float)
    capped = np.where(A > 0.5, R, np.inf)
    return np.min(capped, axis=-2)


def rate_report(alpha, W, H, config: SystemConfig) -> RateReport:
    A = _alpha(alpha)
    R = rate_matrix(A, W, H, config.noise_power)
    own = np.diag(R).copy()
    active = A > 0.5
    np.fill_diagonal(active, False)
    decode = np.where(active, R, np.nan)
    violations = tuple(
        (int(i), int(k)) for i, k in np.argwhere(active) if R[i, k] < own[k] - FEAS_TOL)
    eff = effective_rates(A, R)
    return RateReport(
        rate_own=own,
        rate_decode=decode,
        sum_rate=float(own.sum()),
        sic_feasible=not violations,
        min_rate_feasible=bool(np.all(own >= config.r_min - FEAS_TOL)),
        effective_rate=eff,
        sic_violations=violations,
    )


def sic_complexity(alpha) -> int:
    """Number of matched pairs counted both ways, sum_k sum_{j!=k} (a_kj + a_jk)."""
    A = np.asarray(_alpha(alpha)).copy()
    np.fill_diagonal(A, 0)
    return int(round(A.sum() + A.T.sum()))


def scheme_alpha(scheme: str, H, clusters=None) -> np.ndarray:
    """SIC matrix induced by SDMA, BB-NOMA or CB-NOMA."""
    Hm = _channel(H)
    K = Hm.num_users
    below = Hm.below
    scheme = scheme.upper().replace("-", "_")
    if scheme == "SDMA":
        return np.eye(K, dtype=np.int8)
    if scheme == "BB_NOMA":
        A = below.T.astype(np.int8)      # i decodes k when k is weaker
    elif scheme == "CB_NOMA":
        member = _cluster_labels(clusters, K)
        A = (below.T & (member[:, None] == member[None, :])).astype(np.int8)
    else:
        raise ValueError(f"unknown scheme {scheme!r}")
    np.fill_diagonal(A, 1)
    return A


def _cluster_labels(clusters, K: int) -> np.ndarray:
    if clusters is None:
        raise ValueError("CB-NOMA needs a cluster partition")
    groups = getattr(clusters, "clusters", clusters)
    label = np.full(K, -1)
    for g, members in enumerate(groups):
        members = list(members)
        if not members:
            raise ValueError("empty cluster")
        for k in members:
            if not 0 <= k < K or label[k] != -1:
                raise ValueError("clusters must partition the users")
            label[k] = g
    if np.any(label < 0):
        raise ValueError("clusters must cover every user")
    return label


def baseline_rate_formula(scheme: str, W, H, sigma2: float, clusters=None) -> float:
    """Closed-form sum rate of SDMA, BB-NOMA or CB-NOMA written out directly."""
    Hm = _channel(H)
    G = channel_gains(Hm, W)
    rank = Hm.rank
    K = Hm.num_users
    scheme = scheme.upper().replace("-", "_")
    if scheme == "CB_NOMA":
        label = _cluster_labels(clusters, K)
    elif scheme not in ("SDMA", "BB_NOMA"):
        raise ValueError(f"unknown scheme {scheme!r}")
    total = 0.0
    for k in range(K):
        if scheme == "SDMA":
            interf = sum(G[k, u] for u in range(K) if u != k)
        elif scheme == "BB_NOMA":
            interf = sum(G[k, u] for u in range(K) if rank[u] > rank[k])
        else:
            interf = sum(G[k, u] for u in range(K)
                         if u != k and (label[u] != label[k] or rank[u] > rank[k]))
        total += np.log2(1.0 + G[k, k] / (interf + sigma2))
    return float(total)


def matched_filter(H, power: float) -> np.ndarray:
    """Maximum-ratio beams with the budget split equally over users."""
    h = _channel(H).h
    W = h.T / np.linalg.norm(h, axis=1)
    return W * np.sqrt(power / h.shape[0])


def random_beams(rng: np.random.Generator, M: int, K: int, power: float) -> np.ndarray:
    """Complex Gaussian beams scaled to use exactly the full budget."""
    W = rng.standard_normal((M, K)) + 1j * rng.standard_normal((M, K))
    return W * np.sqrt(power) / np.linalg.norm(W)
