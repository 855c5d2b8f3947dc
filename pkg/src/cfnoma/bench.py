"""Seeded experiment sweeps over correlation and user count.

Every (corr, K, realization) instance draws one channel and runs each
requested method on it.  Rows are written to a versioned CSV whose bytes
depend only on the experiment definition; wall-clock timings go to a separate file.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .admm import TRACE_HEADER as ADMM_TRACE_HEADER
from .admm import run_admm_sca
from .baselines import (
    exhaustive_search_sca, solve_bb_noma, solve_cb_noma, solve_enhanced_cb_noma, solve_sdma,
)
from .matching import TRACE_HEADER as MATCHING_TRACE_HEADER
from .matching import SwapPolicy, run_matching_sca
from .system import SystemConfig, generate_channel, sic_complexity

__all__ = [
    "METHODS", "SCHEMA", "CSV_HEADER", "ExperimentSpec", "ResultRow", "ExperimentResult",
    "run_experiment", "run_instance", "summarize", "rows_to_csv", "instance_seed",
    "regime", "EXPECTED_LABELS", "worker_count",
]

METHODS = ("admm-sca", "matching-sca", "exhaustive", "sdma", "bb-noma", "cb-noma", "ecb-noma")
PROPOSED = ("admm-sca", "matching-sca")
SCHEMA = "cfnoma-rows/1"
CSV_HEADER = ("seed", "K", "M", "corr", "realization", "method", "sum_rate", "min_rate",
              "sic_complexity", "iterations", "feasible", "stable", "status")
LABELS = ("Best", "High", "Medium", "Low")

# Expected ranking labels per (correlation, load) regime for SDMA, CB-NOMA,
# BB-NOMA and the proposed framework.
EXPECTED_LABELS = {
    ("low", "underloaded"): {"sdma": "High", "cb-noma": "High", "bb-noma": "Low", "proposed": "Best"},
    ("low", "overloaded"): {"sdma": "Medium", "cb-noma": "High", "bb-noma": "Low", "proposed": "Best"},
    ("low", "severely-overloaded"): {"sdma": "Low", "cb-noma": "Medium", "bb-noma": "High",
                                     "proposed": "Best"},
    ("high", "underloaded"): {"sdma": "High", "cb-noma": "High", "bb-noma": "Low", "proposed": "Best"},
    ("high", "overloaded"): {"sdma": "Low", "cb-noma": "Medium", "bb-noma": "High", "proposed": "Best"},
    ("high", "severely-overloaded"): {"sdma": "Low", "cb-noma": "Medium", "bb-noma": "High",
                                      "proposed": "Best"},
}
HIGH_CORR = 0.75


def regime(K: int, M: int, corr: float) -> tuple[str, str]:
    """``(correlation, load)`` class: high correlation from 0.75, underloaded
    for ``K <= M``, severely overloaded beyond ``K > 2M``."""
    load = "underloaded" if K <= M else ("overloaded" if K <= 2 * M else "severely-overloaded")
    return ("high" if corr >= HIGH_CORR else "low"), load


def worker_count() -> int:
    env = os.environ.get("CFNOMA_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


@dataclass(frozen=True)
class ExperimentSpec:
    """One sweep: every method on every (corr, K, realization) instance."""

    base: SystemConfig = field(default_factory=SystemConfig)
    methods: tuple = ("matching-sca", "sdma", "bb-noma", "cb-noma")
    corrs: tuple = (0.9,)
    ks: tuple = (3,)
    realizations: int = 20
    out_dir: str | None = None
    swap_policy: str = "enhanced"
    trace: bool = False

    def __post_init__(self):
        methods = tuple(m.strip().lower() for m in self.methods)
        if not methods:
            raise ValueError("method list is empty")
        unknown = [m for m in methods if m not in METHODS]
        if unknown:
            raise ValueError(f"unknown methods {unknown}; choose from {list(METHODS)}")
        if self.realizations < 1:
            raise ValueError("realizations must be >= 1")
        object.__setattr__(self, "methods", methods)
        object.__setattr__(self, "corrs", tuple(float(c) for c in self.corrs))
        object.__setattr__(self, "ks", tuple(int(k) for k in self.ks))
        SwapPolicy.parse(self.swap_policy)

    def instances(self):
        for ki, K in enumerate(self.ks):
            for ci, corr in enumerate(self.corrs):
                for r in range(self.realizations):
                    yield ci, ki, r

    def echo(self) -> dict:
        d = asdict(self)
        d["base"] = {f.name: getattr(self.base, f.name) for f in fields(self.base)}
        d["base"]["min_rates"] = list(self.base.min_rates)
        return d


@dataclass(frozen=True)
class ResultRow:
    seed: int
    K: int
    M: int
    corr: float
    realization: int
    method: str
    sum_rate: float
    min_rate: float
    sic_complexity: int
    iterations: int
    feasible: bool
    stable: bool | None
    status: str = "ok"
    runtime_ms: float = 0.0

    def csv_fields(self) -> list:
        def fmt(v):
            if isinstance(v, bool) or v is None:
                return "" if v is None else str(int(v))
            if isinstance(v, float):
                return repr(v)
            return str(v)

        return [fmt(getattr(self, name)) for name in CSV_HEADER]


@dataclass
class ExperimentResult:
    spec: ExperimentSpec
    rows: list
    summary: dict
    traces: dict = field(default_factory=dict)

    @property
    def errors(self) -> list:
        return [r for r in self.rows if r.status != "ok"]


def instance_seed(base_seed: int, ci: int, ki: int, r: int) -> int:
    """Deterministic 32-bit seed for one instance."""
    return int(np.random.SeedSequence([base_seed, ci, ki, r]).generate_state(1)[0])


def _config_for(spec: ExperimentSpec, K: int, corr: float, seed: int) -> SystemConfig:
    base = spec.base
    changes = dict(num_users=K, corr=corr, rng_seed=seed)
    if K != base.num_users:
        changes["min_rates"] = None
    return base.replace(**changes)


def _run_method(method, config, H, policy):
    """``(alpha, report, iterations, stable, failed, trace_header, trace_rows)``."""
    if method == "admm-sca":
        res = run_admm_sca(config, H)
        return (res.alpha, res.report, res.iterations, None, res.fallback, ADMM_TRACE_HEADER,
                [rec.row() for rec in res.trace])
    if method == "matching-sca":
        res = run_matching_sca(config, H, policy)
        return (res.alpha, res.report, res.inner_solves, res.stable, res.failed,
                MATCHING_TRACE_HEADER, res.trace)
    solver = {"exhaustive": exhaustive_search_sca, "sdma": solve_sdma, "bb-noma": solve_bb_noma,
              "cb-noma": solve_cb_noma, "ecb-noma": solve_enhanced_cb_noma}[method]
    res = solver(config, H)
    return res.alpha, res.report, res.solves, None, res.failed, None, []


def run_instance(spec: ExperimentSpec, ci: int, ki: int, r: int):
    """Rows (and traces when requested) of one instance."""
    K, corr = spec.ks[ki], spec.corrs[ci]
    seed = instance_seed(spec.base.rng_seed, ci, ki, r)
    config = _config_for(spec, K, corr, seed)
    H = generate_channel(config, seed)
    policy = SwapPolicy.parse(spec.swap_policy)
    rows, traces = [], {}
    for method in spec.methods:
        t0 = time.perf_counter()
        try:
            alpha, rep, iters, stable, failed, header, trace = _run_method(method, config, H, policy)
        except Exception as exc:  # recorded, the batch continues
            rows.append(ResultRow(seed, K, config.num_antennas, corr, r, method, math.nan,
                                  math.nan, 0, 0, False, None,
                                  f"error:{type(exc).__name__}: {exc}".replace("\n", " "),
                                  1e3 * (time.perf_counter() - t0)))
            continue
        ms = 1e3 * (time.perf_counter() - t0)
        feasible = (not failed) and bool(np.all(rep.effective_rate >= config.r_min - 1e-9))
        rows.append(ResultRow(seed, K, config.num_antennas, corr, r, method,
                              float(rep.effective_sum_rate), float(rep.min_rate),
                              sic_complexity(alpha), int(iters), feasible, stable,
                              "failed" if failed else "ok", ms))
        if spec.trace and header is not None:
            traces[f"trace_{method}_K{K}_c{ci}_r{r}.csv"] = (header, trace)
    return rows, traces


def _order_key(spec):
    rank = {m: j for j, m in enumerate(spec.methods)}
    return lambda row: (spec.ks.index(row.K), spec.corrs.index(row.corr), row.realization,
                        rank[row.method])


def run_experiment(spec: ExperimentSpec, workers: int | None = None,
                   progress=None) -> ExperimentResult:
    """Run every instance of ``spec``; write outputs when ``spec.out_dir`` is set."""
    workers = worker_count() if workers is None else max(1, int(workers))
    jobs = list(spec.instances())
    rows, traces = [], {}
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(run_instance, spec, *job) for job in jobs]
            for fut in futures:
                rr, tt = fut.result()
                rows += rr
                traces.update(tt)
                if progress is not None:
                    progress(rr)
    else:
        for job in jobs:
            rr, tt = run_instance(spec, *job)
            rows += rr
            traces.update(tt)
            if progress is not None:
                progress(rr)
    rows.sort(key=_order_key(spec))
    result = ExperimentResult(spec, rows, summarize(rows), traces)
    if spec.out_dir:
        write_outputs(result, spec.out_dir)
    return result


# -- persistence -------------------------------------------------------------

def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    buf.write(f"# schema={SCHEMA}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for row in rows:
        w.writerow(row.csv_fields())
    return buf.getvalue()


def _timing_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("seed", "K", "corr", "realization", "method", "runtime_ms"))
    for r in rows:
        w.writerow((r.seed, r.K, repr(r.corr), r.realization, r.method, f"{r.runtime_ms:.3f}"))
    return buf.getvalue()


def write_outputs(result: ExperimentResult, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "rows.csv").write_text(rows_to_csv(result.rows))
    (out / "timing.csv").write_text(_timing_csv(result.rows))
    (out / "summary.json").write_text(json.dumps(result.summary, indent=2, sort_keys=True) + "\n")
    (out / "config.json").write_text(json.dumps(result.spec.echo(), indent=2, sort_keys=True) + "\n")
    if result.traces:
        tdir = out / "traces"
        tdir.mkdir(exist_ok=True)
        for name, (header, trace) in sorted(result.traces.items()):
            buf = io.StringIO()
            w = csv.writer(buf, lineterminator="\n")
            w.writerow(header)
            w.writerows(trace)
            (tdir / name).write_text(buf.getvalue())
    return out


# -- summary -------------------------------------------------------------------

def _stats(values):
    v = np.asarray(values, dtype=float)
    v = v[np.isfinite(v)]
    if v.size == 0:
        return math.nan, math.nan, 0
    se = float(v.std(ddof=1) / np.sqrt(v.size)) if v.size > 1 else 0.0
    return float(v.mean()), se, int(v.size)


def _with_proposed(rows):
    """Add a per-instance ``proposed`` entry, the best of the proposed methods present."""
    by_inst: dict = {}
    for r in rows:
        if r.method in PROPOSED and r.status == "ok" and np.isfinite(r.sum_rate):
            key = (r.K, r.corr, r.realization)
            by_inst[key] = max(by_inst.get(key, -math.inf), r.sum_rate)
    return by_inst


def _rank_groups(stats):
    """Methods sorted by mean; a method joins the current rank while its mean is
    within the combined stderr of that rank's leader."""
    order = sorted(stats, key=lambda m: -stats[m][0])
    ranks, rank, leader = {}, 0, None
    for m in order:
        if leader is not None and (stats[leader][0] - stats[m][0]
                                   > math.hypot(stats[leader][1], stats[m][1])):
            rank += 1
            leader = m
        leader = leader or m
        ranks[m] = rank
    return order, ranks


def summarize(rows) -> dict:
    """Mean and stderr per (K, corr) cell, a ranking with Best/High/Medium/Low
    labels, and a pairwise comparison against the expected ordering."""
    cells: dict = {}
    for r in rows:
        cells.setdefault((r.K, r.M, r.corr), {}).setdefault(r.method, []).append(r)
    proposed = _with_proposed(rows)
    out = {"schema": SCHEMA, "cells": []}
    for (K, M, corr), per in sorted(cells.items()):
        stats = {m: _stats([x.sum_rate for x in rs if x.status == "ok"]) for m, rs in per.items()}
        prop = [v for (k, c, _), v in proposed.items() if k == K and c == corr]
        if prop:
            stats["proposed"] = _stats(prop)
        stats = {m: s for m, s in stats.items() if s[2] > 0}
        order, ranks = _rank_groups(stats)
        labels = {m: LABELS[min(ranks[m], len(LABELS) - 1)] for m in order}
        reg = regime(K, M, corr)
        cell = {
            "K": K, "M": M, "corr": corr, "regime": list(reg),
            "methods": {m: {"mean": stats[m][0], "stderr": stats[m][1], "n": stats[m][2],
                            "rank": ranks[m], "label": labels[m]} for m in order},
            "ordering": order,
            "errors": sum(1 for rs in per.values() for x in rs if x.status.startswith("error")),
        }
        cell["expected"] = _compare(EXPECTED_LABELS.get(reg, {}), ranks)
        out["cells"].append(cell)
    return out


def _compare(expected: dict, ranks: dict) -> dict:
    """For each pair of methods with an expected label, whether the observed
    rank relation (better, tie, worse) matches the expected one."""
    level = {lab: j for j, lab in enumerate(LABELS)}
    present = [m for m in expected if m in ranks]
    pairs = []
    for a_i, a in enumerate(present):
        for b in present[a_i + 1:]:
            want = np.sign(level[expected[b]] - level[expected[a]])
            got = np.sign(ranks[b] - ranks[a])
            pairs.append({"a": a, "b": b, "expected": int(want), "observed": int(got),
                          "match": bool(want == got)})
    return {"labels": {m: expected[m] for m in present}, "pairs": pairs,
            "matches": sum(p["match"] for p in pairs), "total": len(pairs)}
