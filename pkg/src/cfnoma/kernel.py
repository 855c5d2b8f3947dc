"""Convex surrogates of the joint SIC/beamforming problem.

Three first-order cuts make the rate constraints convex around an expansion
point (``w_bar``, ``I_bar``, ``alpha_bar``, ``r_bar``):

* :func:`taylor_signal` -- affine minorant of ``|h_i^H w_k|^2``;
* :func:`taylor_log_intf` -- affine majorant of ``log2(I)`` so that
  ``log2(1 + S/I)`` becomes concave;
* :func:`taylor_bilinear` -- convex majorant of ``alpha * r`` from a
  difference-of-squares split.

Each cut holds with equality at its expansion point, so the point itself is
always feasible for the surrogate built around it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .conic import LN2, Affine, ConvexProgram, SolverResult
from .system import ChannelMatrix, SystemConfig, _alpha, _beams, _channel, channel_gains

__all__ = [
    "AuxiliaryBlock", "SignalCut", "LogCut", "BilinearCut", "BeamMap",
    "beta_coefficients", "intf_beta", "intf_beta_matrix",
    "taylor_signal", "taylor_log_intf", "taylor_bilinear",
    "build_beamforming_problem", "build_alpha_w_problem", "build_beta_problem",
    "beams_from", "aux_from", "I_FLOOR",
]

I_FLOOR = 1e-3  # expansion floor for I_bar, relative to the noise power


@dataclass(frozen=True)
class AuxiliaryBlock:
    """Effective-gain lower bounds ``S``, interference upper bounds ``I`` and
    rate lower bounds ``r``, all ``(K, K)``.  Entries of pairs a surrogate does
    not model are NaN."""

    S: np.ndarray
    I: np.ndarray
    r: np.ndarray

    @classmethod
    def exact(cls, alpha, W, H, sigma2: float, beta=None) -> "AuxiliaryBlock":
        """Tight values at ``(alpha, W)``: ``S = |h^H w|^2``, ``I`` the actual
        interference and ``r`` the SIC-capped rates (``r_ik >= alpha_ik r_kk``)."""
        Hm = _channel(H)
        A = _alpha(alpha)
        G = channel_gains(Hm, W)
        B = 1.0 - A if beta is None else np.asarray(beta, dtype=float)
        I = intf_beta_matrix(B, G, sigma2, Hm.below)
        R = np.log2(1.0 + G / I)
        r = R.copy()
        K = A.shape[0]
        for k in range(K):
            cap = R[k, k]
            for i in range(K):
                if i != k and A[i, k] > 1e-12:
                    cap = min(cap, R[i, k] / A[i, k])
            r[k, k] = cap
        return cls(G, I, r)


# -- interference in complement form ---------------------------------------

def beta_coefficients(beta, below: np.ndarray) -> np.ndarray:
    """Coefficient tensor ``C[i, k, u]`` of ``|h_i^H w_u|^2`` in the interference
    at user i when decoding user k, with ``beta = 1 - alpha``.

    Off the diagonal the coefficients are pointwise maxima of affine functions
    of ``beta``, which is what makes the interference convex in ``beta``.
    """
    B = np.asarray(beta, dtype=float)
    K = B.shape[-1]
    Biu = B[..., :, None, :]
    Buk = np.swapaxes(B, -1, -2)[..., None, :, :]
    Bku = B[..., None, :, :]
    b = below.T[None, :, :]
    C = np.where(b, np.maximum(Biu, 1.0 - Buk), np.maximum(Biu, Bku))
    eye = np.eye(K, dtype=bool)
    C = np.where(eye[:, :, None], B[..., None, :, :], C)
    return np.where(eye[None, :, :], 0.0, C)


def intf_beta_matrix(beta, G: np.ndarray, sigma2: float, below: np.ndarray) -> np.ndarray:
    return np.einsum("...iku,iu->...ik", beta_coefficients(beta, below), G) + sigma2


def intf_beta(beta, W, H, sigma2: float, i: int, k: int) -> float:
    Hm = _channel(H)
    B = np.asarray(beta, dtype=float)
    G = channel_gains(Hm, W)
    C = beta_coefficients(B, Hm.below)
    return float(C[i, k] @ G[i] + sigma2)


# -- first-order cuts ------------------------------------------------------

@dataclass(frozen=True)
class SignalCut:
    """``S <= re * Re(h^H w) + im * Im(h^H w) - offset``."""

    re: float
    im: float
    offset: float

    def bound(self, h: np.ndarray, w: np.ndarray) -> float:
        z = np.vdot(h, w)
        return float(self.re * z.real + self.im * z.imag - self.offset)


def taylor_signal(w_bar: np.ndarray, h: np.ndarray) -> SignalCut:
    """Tangent of ``|h^H w|^2`` at ``w_bar``; a global minorant by convexity."""
    a = np.vdot(h, w_bar)
    return SignalCut(2.0 * a.real, 2.0 * a.imag, float(abs(a) ** 2))


@dataclass(frozen=True)
class LogCut:
    """``r <= log2(I + S) - offset - slope * I``."""

    slope: float
    offset: float
    I_bar: float

    def rate_bound(self, S: float, I: float) -> float:
        return float(np.log2(I + S) - self.offset - self.slope * I)


def taylor_log_intf(I_bar: float) -> LogCut:
    """Tangent of ``log2(I)`` at ``I_bar`` (an upper bound by concavity)."""
    if not I_bar > 0:
        raise ValueError(f"expansion interference must be positive, got {I_bar}")
    slope = 1.0 / (I_bar * LN2)
    return LogCut(slope, float(np.log2(I_bar)) - 1.0 / LN2, float(I_bar))


@dataclass(frozen=True)
class BilinearCut:
    """``r_ik >= (alpha + r_kk)^2 / 4 - d^2 / 4 - d (alpha - a_bar + r_bar - r_kk) / 2``
    with ``d = a_bar - r_bar``.

    The right-hand side majorises ``alpha * r_kk`` (the concave half of the
    difference of squares is replaced by its tangent), so the cut implies
    ``r_ik >= alpha * r_kk``.
    """

    alpha_bar: float
    r_bar: float

    @property
    def d(self) -> float:
        return self.alpha_bar - self.r_bar

    def upper(self, alpha: float, r_kk: float) -> float:
        d = self.d
        return float(0.25 * (alpha + r_kk) ** 2 - 0.25 * d * d
                     - 0.5 * d * (alpha - self.alpha_bar + self.r_bar - r_kk))

    def add_to(self, prog: ConvexProgram, r_ik: Affine, alpha: Affine, r_kk: Affine, label=""):
        d = self.d
        L = r_ik + 0.25 * d * d + 0.5 * d * (alpha - self.alpha_bar + self.r_bar - r_kk)
        # (alpha + r_kk)^2 <= 4 L
        prog.add_rotated_soc([alpha + r_kk], 4.0 * L, prog.const(1.0), label)


def taylor_bilinear(alpha_bar: float, r_bar: float) -> BilinearCut:
    return BilinearCut(float(alpha_bar), float(r_bar))


# -- beam parameterisation -------------------------------------------------

@dataclass(frozen=True)
class BeamMap:
    """Affine map from a real variable block ``z`` to the beam coordinates
    ``[Re(W).ravel(), Im(W).ravel()] = T @ z + offset``."""

    T: np.ndarray
    offset: np.ndarray

    @classmethod
    def direct(cls, M: int, K: int) -> "BeamMap":
        return cls(np.eye(2 * M * K), np.zeros(2 * M * K))

    def beams(self, z: np.ndarray, M: int, K: int) -> np.ndarray:
        c = self.T @ z + self.offset
        return (c[:M * K] + 1j * c[M * K:]).reshape(M, K)


def _coord_rows(h: np.ndarray):
    """Rows over beam coordinates giving Re and Im of ``h_i^H w_u``."""
    K, M = h.shape
    hr, hi = h.real, h.imag
    Ere = np.zeros((K, K, 2, M, K))
    Eim = np.zeros((K, K, 2, M, K))
    for u in range(K):
        Ere[:, u, 0, :, u] = hr
        Ere[:, u, 1, :, u] = hi
        Eim[:, u, 1, :, u] = hr
        Eim[:, u, 0, :, u] = -hi
    return Ere.reshape(K, K, -1), Eim.reshape(K, K, -1)


class _Beams:
    """Affine expressions of ``h_i^H w_u`` and the power budget over a program."""

    def __init__(self, prog: ConvexProgram, h: np.ndarray, z_idx: np.ndarray, bmap: BeamMap):
        n = prog.n
        Tx = np.zeros((bmap.T.shape[0], n))
        Tx[:, z_idx] = bmap.T
        Ere, Eim = _coord_rows(h)
        self.re_rows = Ere @ Tx
        self.im_rows = Eim @ Tx
        self.re_const = Ere @ bmap.offset
        self.im_const = Eim @ bmap.offset
        self.Tx, self.offset = Tx, bmap.offset

    def re(self, i, u) -> Affine:
        return Affine(self.re_rows[i, u], self.re_const[i, u])

    def im(self, i, u) -> Affine:
        return Affine(self.im_rows[i, u], self.im_const[i, u])

    def add_power(self, prog: ConvexProgram, P: float):
        xs = [Affine(row, c) for row, c in zip(self.Tx, self.offset)]
        prog.add_soc(prog.const(np.sqrt(P)), xs, "power")

    def add_signal_cut(self, prog, cut: SignalCut, S: Affine, i, k):
        rhs = cut.re * self.re(i, k) + cut.im * self.im(i, k) - cut.offset
        prog.add_le(S, rhs, f"signal[{i},{k}]")

    def add_intf(self, prog, coeffs: np.ndarray, i: int, I: Affine, sigma2: float, label=""):
        """``sum_u coeffs[u] |h_i^H w_u|^2 + sigma2 <= I``."""
        xs = []
        for u in np.flatnonzero(coeffs > 0):
            s = np.sqrt(coeffs[u])
            xs += [s * self.re(i, u), s * self.im(i, u)]
        if xs:
            prog.add_rotated_soc(xs, I - sigma2, prog.const(1.0), label)
        else:
            prog.add_ge(I, sigma2, label)


def _add_log_cut(prog, cut: LogCut, r: Affine, S: Affine, I: Affine, label=""):
    t = r + cut.offset + cut.slope * I
    prog.add_log2_ge(t, I + S, label)


def _floor(I_bar, sigma2):
    return np.maximum(np.asarray(I_bar, dtype=float), sigma2 * I_FLOOR)


# -- problem builders ------------------------------------------------------

def build_beamforming_problem(alpha, H, config: SystemConfig, W_bar, I_bar,
                              beam_map: BeamMap | None = None,
                              feasibility: bool = False) -> ConvexProgram:
    """Beamforming surrogate for a fixed binary SIC matrix.

    Only own-decoding pairs and active SIC pairs carry ``S``, ``I`` and ``r``
    variables; the objective is the sum of own rates ``r_kk``, each of which is
    capped by the decode rates of its active SIC pairs.

    With ``feasibility`` the rate floors become ``r_kk >= r_min_k + t`` and the
    objective is the margin ``t`` (a max-min phase used to reach a point that
    meets the floors).
    """
    Hm = _channel(H)
    A = np.asarray(_alpha(alpha)).round().astype(int)
    K, M = Hm.num_users, Hm.num_antennas
    sigma2 = config.noise_power
    W_bar = _beams(W_bar)
    I_bar = _floor(I_bar, sigma2)
    pairs = [(k, k) for k in range(K)] + [
        (i, k) for i in range(K) for k in range(K) if i != k and A[i, k] == 1]
    npair = len(pairs)
    bmap = beam_map or BeamMap.direct(M, K)

    prog = ConvexProgram()
    z = prog.variable("z", bmap.T.shape[1])
    S = prog.variable("S", npair)
    I = prog.variable("I", npair)
    r = prog.variable("r", npair)
    t = prog.variable("t") if feasibility else None
    beams = _Beams(prog, Hm.h, z, bmap)
    C = beta_coefficients(1.0 - A, Hm.below)
    rmin = config.r_min
    for p, (i, k) in enumerate(pairs):
        beams.add_signal_cut(prog, taylor_signal(W_bar[:, k], Hm.h[i]), prog.var(S[p]), i, k)
        beams.add_intf(prog, C[i, k], i, prog.var(I[p]), sigma2, f"intf[{i},{k}]")
        _add_log_cut(prog, taylor_log_intf(I_bar[i, k]), prog.var(r[p]), prog.var(S[p]),
                     prog.var(I[p]), f"log[{i},{k}]")
        if i != k:
            prog.add_ge(prog.var(r[p]), prog.var(r[k]), f"sic[{i},{k}]")
    margin = prog.var(t) if feasibility else prog.zero()
    for k in range(K):
        prog.add_ge(prog.var(r[k]), margin + rmin[k], f"rmin[{k}]")
    beams.add_power(prog, config.power_budget)
    prog.maximize(margin if feasibility else prog.var(r[:K]))
    prog.meta.update(kind="beamforming", pairs=pairs, K=K, M=M, beam_map=bmap)
    return prog


def _offdiag(K):
    return [(i, k) for i in range(K) for k in range(K) if i != k]


def _al_penalties(prog, K, rho, alpha_expr, beta_expr, lam, lam_t):
    """Subtract both augmented-Lagrangian terms; arguments give the Affine of
    alpha[i, k] / beta[i, k] (one of them constant) for every off-diagonal pair."""
    w = 1.0 / (2.0 * rho)
    for i, k in _offdiag(K):
        a, b = alpha_expr(i, k), beta_expr(i, k)
        prog.add_square_penalty(a + b - 1.0 + rho * lam[i, k], w)
        # alpha * beta is affine because one factor is a constant here
        prog.add_square_penalty(_product(a, b) + rho * lam_t[i, k], w)


def _product(a: Affine, b: Affine) -> Affine:
    if not np.any(a.coef):
        return b * a.const
    if not np.any(b.coef):
        return a * b.const
    raise ValueError("product of two non-constant expressions")


def build_alpha_w_problem(state, H, config: SystemConfig) -> ConvexProgram:
    """ADMM block 1: SIC relaxation ``alpha`` jointly with ``W, S, I, r``
    (``beta`` and the duals fixed, surrogates expanded at ``state``)."""
    Hm = _channel(H)
    K, M = Hm.num_users, Hm.num_antennas
    sigma2 = config.noise_power
    beta = np.asarray(state.beta, dtype=float)
    W_bar = _beams(state.W)
    I_bar = _floor(state.aux.I, sigma2)
    a_bar = np.asarray(state.alpha, dtype=float)
    r_bar = np.diag(state.aux.r)
    pairs = _offdiag(K)
    bmap = BeamMap.direct(M, K)

    prog = ConvexProgram()
    a_idx = prog.variable("alpha", len(pairs), lb=0.0, ub=1.0)
    z = prog.variable("z", bmap.T.shape[1])
    S = prog.variable("S", (K, K))
    I = prog.variable("I", (K, K))
    r = prog.variable("r", (K, K))
    pos = {p: j for j, p in enumerate(pairs)}
    beams = _Beams(prog, Hm.h, z, bmap)

    def alpha_expr(i, k):
        return prog.var(a_idx[pos[(i, k)]])

    C = beta_coefficients(beta, Hm.below)
    for i in range(K):
        for k in range(K):
            Sv, Iv, rv = prog.var(S[i, k]), prog.var(I[i, k]), prog.var(r[i, k])
            beams.add_signal_cut(prog, taylor_signal(W_bar[:, k], Hm.h[i]), Sv, i, k)
            beams.add_intf(prog, C[i, k], i, Iv, sigma2, f"intf[{i},{k}]")
            _add_log_cut(prog, taylor_log_intf(I_bar[i, k]), rv, Sv, Iv, f"log[{i},{k}]")
            if i != k:
                taylor_bilinear(a_bar[i, k], r_bar[k]).add_to(
                    prog, rv, alpha_expr(i, k), prog.var(r[k, k]), f"dc[{i},{k}]")
    for i, k in pairs:
        if i < k:
            prog.add_le(alpha_expr(i, k) + alpha_expr(k, i), 1.0, f"order[{i},{k}]")
    for k in range(K):
        prog.add_ge(prog.var(r[k, k]), config.r_min[k], f"rmin[{k}]")
    beams.add_power(prog, config.power_budget)
    prog.maximize(prog.var(np.diag(r)))
    _al_penalties(prog, K, state.rho, alpha_expr, lambda i, k: prog.const(beta[i, k]),
                  state.lam, state.lam_t)
    prog.meta.update(kind="alpha_w", pairs=pairs, K=K, M=M, beam_map=bmap)
    return prog


def build_beta_problem(state, H, config: SystemConfig) -> ConvexProgram:
    """ADMM block 2: complement ``beta`` with ``I, r`` (``alpha, W, S`` fixed)."""
    Hm = _channel(H)
    K = Hm.num_users
    sigma2 = config.noise_power
    alpha = np.asarray(state.alpha, dtype=float)
    G = channel_gains(Hm, state.W)
    S_fix = np.asarray(state.aux.S, dtype=float)
    I_bar = _floor(state.aux.I, sigma2)
    r_bar = np.diag(state.aux.r)
    below = Hm.below
    pairs = _offdiag(K)
    # epigraph variables for the max{.,.} coefficients, one per (i, k, u)
    triples = [(i, k, u) for i, k in pairs for u in range(K) if u != k]

    prog = ConvexProgram()
    b_idx = prog.variable("beta", len(pairs), lb=0.0, ub=1.0)
    m_idx = prog.variable("m", len(triples))
    I = prog.variable("I", (K, K))
    r = prog.variable("r", (K, K))
    pos = {p: j for j, p in enumerate(pairs)}

    def beta_expr(i, k):
        if i == k:
            return prog.const(0.0)
        return prog.var(b_idx[pos[(i, k)]])

    for k in range(K):
        expr = prog.const(sigma2)
        for u in range(K):
            if u != k:
                expr = expr + G[k, u] * beta_expr(k, u)
        prog.add_le(expr, prog.var(I[k, k]), f"intf[{k},{k}]")
    rows: dict = {}
    for j, (i, k, u) in enumerate(triples):
        m = prog.var(m_idx[j])
        prog.add_ge(m, beta_expr(i, u))
        other = (1.0 - beta_expr(u, k)) if below[u, k] else beta_expr(k, u)
        prog.add_ge(m, other)
        rows.setdefault((i, k), prog.const(sigma2))
        rows[(i, k)] = rows[(i, k)] + G[i, u] * m
    for (i, k), expr in rows.items():
        prog.add_le(expr, prog.var(I[i, k]), f"intf[{i},{k}]")
    for i in range(K):
        for k in range(K):
            _add_log_cut(prog, taylor_log_intf(I_bar[i, k]), prog.var(r[i, k]),
                         prog.const(S_fix[i, k]), prog.var(I[i, k]), f"log[{i},{k}]")
            if i != k:
                taylor_bilinear(alpha[i, k], r_bar[k]).add_to(
                    prog, prog.var(r[i, k]), prog.const(alpha[i, k]), prog.var(r[k, k]),
                    f"dc[{i},{k}]")
    for k in range(K):
        prog.add_ge(prog.var(r[k, k]), config.r_min[k], f"rmin[{k}]")
    prog.maximize(prog.var(np.diag(r)))
    _al_penalties(prog, K, state.rho, lambda i, k: prog.const(alpha[i, k]), beta_expr,
                  state.lam, state.lam_t)
    prog.meta.update(kind="beta", pairs=pairs, K=K)
    return prog


# -- result decoding -------------------------------------------------------

def beams_from(prog: ConvexProgram, res: SolverResult) -> np.ndarray:
    meta = prog.meta
    return meta["beam_map"].beams(res["z"], meta["M"], meta["K"])


def aux_from(prog: ConvexProgram, res: SolverResult) -> AuxiliaryBlock:
    """Auxiliary block on the full ``(K, K)`` grid (NaN where not modelled)."""
    K = prog.meta["K"]
    out = {}
    for name in ("S", "I", "r"):
        v = res.values.get(name)
        if v is None:
            out[name] = None
            continue
        if np.ndim(v) == 2:
            out[name] = np.array(v, dtype=float)
            continue
        full = np.full((K, K), np.nan)
        for p, (i, k) in enumerate(prog.meta["pairs"][:len(v)]):
            full[i, k] = v[p]
        out[name] = full
    return AuxiliaryBlock(out["S"], out["I"], out["r"])
