"""Command-line entry point: ``python3 -m cfnoma``."""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import fields

import numpy as np

from .bench import METHODS, ExperimentSpec, run_experiment
from .matching import SwapPolicy
from .system import SystemConfig

FULL_REALIZATIONS = 100
_SPEC_KEYS = {"methods", "corrs", "ks", "realizations", "swap_policy"}


def parse_range(text: str) -> tuple:
    """``a:b:step`` (inclusive of ``b``) or a comma list of floats."""
    if ":" in text:
        parts = [float(x) for x in text.split(":")]
        if len(parts) != 3 or parts[2] <= 0 or parts[1] < parts[0]:
            raise argparse.ArgumentTypeError("expected a:b:step with step > 0 and b >= a")
        a, b, step = parts
        n = int(np.floor((b - a) / step + 1e-9)) + 1
        return tuple(round(a + j * step, 10) for j in range(n))
    return tuple(float(x) for x in text.split(","))


def parse_ints(text: str) -> tuple:
    return tuple(int(x) for x in text.split(","))


def parse_methods(text: str) -> tuple:
    methods = tuple(m.strip().lower() for m in text.split(",") if m.strip())
    bad = [m for m in methods if m not in METHODS]
    if bad or not methods:
        raise argparse.ArgumentTypeError(f"unknown methods {bad}; choose from {','.join(METHODS)}")
    return methods


def load_config(path: str) -> tuple[dict, dict]:
    """JSON file with SystemConfig fields plus optional sweep keys."""
    with open(path) as fh:
        raw = json.load(fh)
    names = {f.name for f in fields(SystemConfig)}
    unknown = set(raw) - names - _SPEC_KEYS
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    return ({k: v for k, v in raw.items() if k in names},
            {k: v for k, v in raw.items() if k in _SPEC_KEYS})


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cfnoma", description="Cluster-free NOMA sum-rate sweeps.")
    p.add_argument("--config", help="JSON file of system parameters and sweep defaults")
    p.add_argument("--method", type=parse_methods, help=f"comma list from {','.join(METHODS)}")
    p.add_argument("--sweep-corr", type=parse_range, help="a:b:step or a comma list")
    p.add_argument("--sweep-k", type=parse_ints, help="comma list of user counts")
    p.add_argument("--realizations", type=int, help="channel draws per cell (default 20)")
    p.add_argument("--full", action="store_true", help=f"use {FULL_REALIZATIONS} realizations")
    p.add_argument("--seed", type=int, help="base seed")
    p.add_argument("--swap-policy", choices=[s.value for s in SwapPolicy])
    p.add_argument("--out", help="output directory")
    p.add_argument("--trace", action="store_true", help="write per-run convergence traces")
    return p


def spec_from_args(args) -> ExperimentSpec:
    cfg, extra = load_config(args.config) if args.config else ({}, {})
    if args.seed is not None:
        cfg["rng_seed"] = args.seed
    base = SystemConfig(**cfg)
    realizations = extra.get("realizations", 20)
    if args.full:
        realizations = FULL_REALIZATIONS
    if args.realizations is not None:
        realizations = args.realizations
    return ExperimentSpec(
        base=base,
        methods=args.method or tuple(extra.get("methods", ExperimentSpec.methods)),
        corrs=args.sweep_corr or tuple(extra.get("corrs", (base.corr,))),
        ks=args.sweep_k or tuple(extra.get("ks", (base.num_users,))),
        realizations=realizations,
        out_dir=args.out,
        swap_policy=args.swap_policy or extra.get("swap_policy", "enhanced"),
        trace=args.trace,
    )


def format_summary(summary: dict) -> str:
    lines = []
    for cell in summary["cells"]:
        exp = cell["expected"]
        head = f"K={cell['K']} M={cell['M']} corr={cell['corr']:g} ({'/'.join(cell['regime'])})"
        if exp["total"]:
            head += f"  expected-order pairs matched {exp['matches']}/{exp['total']}"
        lines.append(head)
        for m, s in cell["methods"].items():
            lines.append(f"  {m:<13} {s['mean']:9.4f} +- {s['stderr']:.4f}  n={s['n']:<4} {s['label']}")
    return "\n".join(lines)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        spec = spec_from_args(args)
    except (ValueError, TypeError, OSError) as exc:
        parser.error(str(exc))
    result = run_experiment(spec)
    print(format_summary(result.summary))
    if spec.out_dir:
        print(f"wrote {spec.out_dir}")
    errors = result.errors
    failed = [r for r in errors if r.status.startswith("error")]
    if failed:
        for r in failed:
            print(f"{r.method} K={r.K} corr={r.corr} r={r.realization}: {r.status}", file=sys.stderr)
        return 2
    return 0
