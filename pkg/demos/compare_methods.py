"""Run every method on one seeded channel and print the rates side by side."""

import argparse

from cfnoma import SystemConfig, generate_channel
from cfnoma.admm import run_admm_sca
from cfnoma.baselines import (
    exhaustive_search_sca, solve_bb_noma, solve_cb_noma, solve_enhanced_cb_noma, solve_sdma,
)
from cfnoma.matching import run_matching_sca
from cfnoma.system import sic_complexity


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--users", type=int, default=4)
    p.add_argument("--corr", type=float, default=0.9)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--starts", type=int, default=5, help="ADMM-SCA multi-starts")
    args = p.parse_args()

    cfg = SystemConfig(num_users=args.users, corr=args.corr, rng_seed=args.seed)
    H = generate_channel(cfg, args.seed)
    runs = {
        "sdma": lambda: solve_sdma(cfg, H),
        "bb-noma": lambda: solve_bb_noma(cfg, H),
        "cb-noma": lambda: solve_cb_noma(cfg, H),
        "ecb-noma": lambda: solve_enhanced_cb_noma(cfg, H),
        "matching-sca": lambda: run_matching_sca(cfg, H),
        "admm-sca": lambda: run_admm_sca(cfg, H, n_ini=args.starts),
    }
    if args.users <= 4:
        runs["exhaustive"] = lambda: exhaustive_search_sca(cfg, H)
    print(f"K={args.users} M={cfg.num_antennas} corr={args.corr} SNR={cfg.snr_db} dB")
    for name, run in runs.items():
        res = run()
        print(f"  {name:<13} sum rate {res.sum_rate:8.4f}  SIC ops {sic_complexity(res.alpha):3d}")


if __name__ == "__main__":
    main()
