"""Small conic modelling layer compiled straight to Clarabel.

Problems are stated as *maximisation* of a linear objective minus optional
convex quadratic penalties, subject to affine, second-order-cone and
exponential-cone constraints.  Expressions are dense affine forms over the
program's variable vector; every variable must be declared before the first
constraint is added.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from enum import Enum

import clarabel
import numpy as np
import scipy.sparse as sp

__all__ = ["Affine", "ConvexProgram", "SolverResult", "Status", "solve", "LN2", "KKT_TOL"]

LN2 = float(np.log(2.0))


class Status(Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    NUMERICAL_FAILURE = "NumericalFailure"


class Affine:
    """``coef @ x + const`` over a program's variable vector."""

    __slots__ = ("coef", "const")

    def __init__(self, coef: np.ndarray, const: float = 0.0):
        self.coef = coef
        self.const = float(const)

    def __add__(self, other):
        if isinstance(other, Affine):
            return Affine(self.coef + other.coef, self.const + other.const)
        return Affine(self.coef, self.const + float(other))

    __radd__ = __add__

    def __neg__(self):
        return Affine(-self.coef, -self.const)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, s):
        s = float(s)
        return Affine(self.coef * s, self.const * s)

    __rmul__ = __mul__

    def value(self, x: np.ndarray) -> float:
        return float(self.coef @ x + self.const)


@dataclass
class _Block:
    kind: str        # "zero" | "nonneg" | "soc" | "exp"
    rows: np.ndarray  # (m, n) coefficients of the cone member s = rows @ x + const
    const: np.ndarray
    label: str = ""


@dataclass
class SolverResult:
    status: Status
    values: dict = field(default_factory=dict)
    objective: float | None = None
    solve_ms: float = 0.0
    x: np.ndarray | None = None
    raw_status: str = ""

    @property
    def ok(self) -> bool:
        return self.status is Status.OPTIMAL

    def __getitem__(self, name):
        return self.values[name]


class ConvexProgram:
    """Declarative convex program (maximise) with a Clarabel backend."""

    def __init__(self):
        self.n = 0
        self._vars: dict[str, tuple[np.ndarray, tuple]] = {}
        self._blocks: list[_Block] = []
        self._frozen = False
        self._c: np.ndarray | None = None
        self._c0 = 0.0
        self._pen: list[tuple[float, Affine]] = []
        self.meta: dict = {}

    # -- variables ---------------------------------------------------------
    def variable(self, name: str, shape=(), lb=None, ub=None) -> np.ndarray:
        if self._frozen:
            raise RuntimeError("declare all variables before adding constraints")
        if name in self._vars:
            raise ValueError(f"duplicate variable {name!r}")
        shape = tuple(np.atleast_1d(shape)) if shape != () else ()
        size = int(np.prod(shape)) if shape else 1
        idx = np.arange(self.n, self.n + size).reshape(shape)
        self.n += size
        self._vars[name] = (idx, shape, lb, ub)
        return idx

    def var(self, index, coef: float = 1.0) -> Affine:
        self._freeze()
        a = np.zeros(self.n)
        a[index] = coef
        return Affine(a)

    def const(self, value: float) -> Affine:
        self._freeze()
        return Affine(np.zeros(self.n), value)

    def zero(self) -> Affine:
        return self.const(0.0)

    def _freeze(self):
        if self._frozen:
            return
        self._frozen = True
        self._c = np.zeros(self.n)
        for name, (idx, _, lb, ub) in self._vars.items():
            flat = np.ravel(idx)
            for bound, sign in ((lb, 1.0), (ub, -1.0)):
                if bound is None:
                    continue
                bnd = np.broadcast_to(np.asarray(bound, dtype=float), np.shape(idx)).ravel()
                rows = np.zeros((flat.size, self.n))
                rows[np.arange(flat.size), flat] = sign
                self._blocks.append(_Block("nonneg", rows, -sign * bnd, f"bound:{name}"))

    # -- constraints -------------------------------------------------------
    def _add(self, kind, exprs, label):
        self._freeze()
        rows = np.array([e.coef for e in exprs])
        const = np.array([e.const for e in exprs])
        self._blocks.append(_Block(kind, rows, const, label))

    def add_ge(self, lhs: Affine, rhs=0.0, label: str = ""):
        """``lhs >= rhs``."""
        self._add("nonneg", [lhs - rhs], label)

    def add_le(self, lhs: Affine, rhs=0.0, label: str = ""):
        self._add("nonneg", [rhs - lhs], label)

    def add_eq(self, lhs: Affine, rhs=0.0, label: str = ""):
        self._add("zero", [lhs - rhs], label)

    def add_soc(self, t: Affine, xs: list[Affine], label: str = ""):
        """``||xs|| <= t``."""
        self._add("soc", [t] + list(xs), label)

    def add_rotated_soc(self, xs: list[Affine], y: Affine, z: Affine, label: str = ""):
        """``||xs||^2 <= y * z`` with ``y, z >= 0``."""
        self.add_soc(0.5 * (y + z), [x for x in xs] + [0.5 * (y - z)], label)

    def add_exp(self, x: Affine, y: Affine, z: Affine, label: str = ""):
        """``(x, y, z)`` in the exponential cone ``y exp(x/y) <= z``."""
        self._add("exp", [x, y, z], label)

    def add_log2_ge(self, t: Affine, arg: Affine, label: str = ""):
        """``t <= log2(arg)``."""
        self.add_exp(t * LN2, self.const(1.0), arg, label)

    # -- objective ---------------------------------------------------------
    def maximize(self, expr: Affine):
        self._freeze()
        self._c = expr.coef.copy()
        self._c0 = expr.const

    def add_square_penalty(self, expr: Affine, weight: float):
        """Subtract ``weight * expr**2`` from the objective."""
        if weight < 0:
            raise ValueError("penalty weight must be non-negative")
        self._freeze()
        self._pen.append((float(weight), expr))

    def objective_value(self, x: np.ndarray) -> float:
        val = float(self._c @ x + self._c0)
        for w, e in self._pen:
            val -= w * e.value(x) ** 2
        return val

    # -- inspection --------------------------------------------------------
    @property
    def variables(self) -> dict:
        return {k: v[0] for k, v in self._vars.items()}

    def num_constraints(self) -> dict:
        out: dict = {}
        for b in self._blocks:
            out[b.kind] = out.get(b.kind, 0) + 1
        return out

    def dump(self) -> str:
        """Plain-text listing of variables and constraint rows."""
        self._freeze()
        names = np.empty(self.n, dtype=object)
        for name, (idx, shape, lb, ub) in self._vars.items():
            for pos, j in np.ndenumerate(idx):
                names[j] = f"{name}{list(pos) if shape else ''}"
        lines = [f"variables {self.n}"]
        for name, (idx, shape, lb, ub) in self._vars.items():
            lines.append(f"  {name} shape={shape} lb={lb} ub={ub}")

        def fmt(coef, const):
            terms = [f"{coef[j]:+.6g}*{names[j]}" for j in np.flatnonzero(coef)]
            return " ".join(terms + [f"{const:+.6g}"])

        lines.append("objective maximize " + fmt(self._c, self._c0))
        for w, e in self._pen:
            lines.append(f"  - {w:.6g} * ( {fmt(e.coef, e.const)} )^2")
        for b in self._blocks:
            lines.append(f"{b.kind} {b.label}")
            for r, c in zip(b.rows, b.const):
                lines.append("  " + fmt(r, c))
        return "\n".join(lines)

    # -- compilation -------------------------------------------------------
    def compile(self):
        """Return ``(P, q, A, b, cones)`` in Clarabel's standard form."""
        self._freeze()
        order = {"zero": 0, "nonneg": 1, "soc": 2, "exp": 3}
        blocks = sorted(self._blocks, key=lambda b: order[b.kind])
        rows, consts, cones = [], [], []
        nz = sum(b.rows.shape[0] for b in blocks if b.kind == "zero")
        nn = sum(b.rows.shape[0] for b in blocks if b.kind == "nonneg")
        if nz:
            cones.append(clarabel.ZeroConeT(nz))
        if nn:
            cones.append(clarabel.NonnegativeConeT(nn))
        for b in blocks:
            rows.append(b.rows)
            consts.append(b.const)
            if b.kind == "soc":
                cones.append(clarabel.SecondOrderConeT(b.rows.shape[0]))
            elif b.kind == "exp":
                cones.append(clarabel.ExponentialConeT())
        A = -np.vstack(rows) if rows else np.zeros((0, self.n))
        bvec = np.concatenate(consts) if consts else np.zeros(0)
        q = -self._c.copy()
        if self._pen:
            E = np.array([e.coef for _, e in self._pen])
            w2 = 2.0 * np.array([w for w, _ in self._pen])
            P = sp.triu(sp.csc_matrix((E.T * w2) @ E), format="csc")
            q += (w2 * np.array([e.const for _, e in self._pen])) @ E
        else:
            P = sp.csc_matrix((self.n, self.n))
        return P, q, sp.csc_matrix(A), bvec, cones

    def unpack(self, x: np.ndarray) -> dict:
        return {name: x[idx] for name, (idx, *_rest) in self._vars.items()}


KKT_TOL = 1e-7
_RETRY_TOL = 1e-6   # looser retry after a numerical stall, still checked below
ACCEPT_VIOLATION = 1e-6
_SETTINGS: dict = {}


def _settings(tol: float):
    if tol not in _SETTINGS:
        s = clarabel.DefaultSettings()
        s.verbose = False
        s.max_iter = 200
        s.tol_gap_abs = tol
        s.tol_gap_rel = tol
        s.tol_feas = tol
        _SETTINGS[tol] = s
    return _SETTINGS[tol]


_OK = {"Solved"}
_ALMOST = {"AlmostSolved"}
_INFEASIBLE = {"PrimalInfeasible", "AlmostPrimalInfeasible"}


def solve(prog: ConvexProgram) -> SolverResult:
    """Solve with Clarabel; ``values`` are present only when Optimal."""
    t0 = time.perf_counter()
    P, q, A, b, cones = prog.compile()
    raw = ""
    for tol in (KKT_TOL, _RETRY_TOL):
        try:
            sol = clarabel.DefaultSolver(P, q, A, b, cones, _settings(tol)).solve()
            raw = str(sol.status)
        except Exception as exc:  # Clarabel panics surface as generic exceptions
            raw = repr(exc)
            continue
        if raw in _OK or raw in _ALMOST:
            x = np.asarray(sol.x)
            if _max_violation(A, b, cones, x) <= ACCEPT_VIOLATION:
                return SolverResult(Status.OPTIMAL, prog.unpack(x), prog.objective_value(x),
                                    _ms(t0), x, raw)
        elif raw in _INFEASIBLE:
            return SolverResult(Status.INFEASIBLE, solve_ms=_ms(t0), raw_status=raw)
    return SolverResult(Status.NUMERICAL_FAILURE, solve_ms=_ms(t0), raw_status=raw)


def _ms(t0):
    return 1e3 * (time.perf_counter() - t0)


def _max_violation(A, b, cones, x) -> float:
    """Largest cone violation of ``b - A x``, relative to the size of the cone
    member for the two nonlinear cones."""
    s = b - A @ x
    worst, pos = 0.0, 0
    exp_at = []
    for cone in cones:
        name = type(cone).__name__
        if name == "ExponentialConeT":
            exp_at.append(pos)
            pos += 3
            continue
        dim = cone.dim if hasattr(cone, "dim") else len(cone)
        blk = s[pos:pos + dim]
        if name == "ZeroConeT":
            worst = max(worst, np.max(np.abs(blk), initial=0.0))
        elif name == "NonnegativeConeT":
            worst = max(worst, -np.min(blk, initial=0.0))
        elif name == "SecondOrderConeT":
            worst = max(worst, (np.linalg.norm(blk[1:]) - blk[0]) / max(1.0, abs(blk[0])))
        pos += dim
    if exp_at:
        u, v, w = s[np.add.outer(exp_at, np.arange(3))].T
        pos_v = v > 0
        if pos_v.any():
            u, v, w = u[pos_v], v[pos_v], w[pos_v]
            gap = (v * np.exp(np.minimum(u / v, 700.0)) - w) / np.maximum(1.0, np.abs(w))
            worst = max(worst, float(gap.max()))
    return float(worst)
