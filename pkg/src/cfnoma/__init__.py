"""Cluster-free SIC for multi-antenna NOMA downlinks.

Joint optimisation of transmit beams and a binary SIC matrix, solved by an
ADMM-SCA relaxation or by Matching-SCA, with SDMA / NOMA baselines, an
exhaustive oracle for small systems, and a seeded sweep harness.
"""

from .admm import AdmmResult, run_admm_sca
from .baselines import (
    SchemeResult, cluster_users, exhaustive_search_sca, solve_bb_noma, solve_cb_noma,
    solve_enhanced_cb_noma, solve_sdma,
)
from .bench import ExperimentSpec, ResultRow, run_experiment, summarize
from .matching import MatchingResult, SwapPolicy, run_matching_sca, run_sca_beamforming
from .system import (
    BeamMatrix, ChannelMatrix, RateReport, SicMatrix, SystemConfig, generate_channel,
    rate_report,
)

__all__ = [
    "AdmmResult", "BeamMatrix", "ChannelMatrix", "ExperimentSpec", "MatchingResult",
    "RateReport", "ResultRow", "SchemeResult", "SicMatrix", "SwapPolicy", "SystemConfig",
    "cluster_users", "exhaustive_search_sca", "generate_channel", "rate_report",
    "run_admm_sca", "run_experiment", "run_matching_sca", "run_sca_beamforming",
    "solve_bb_noma", "solve_cb_noma", "solve_enhanced_cb_noma", "solve_sdma", "summarize",
]
__version__ = "0.1.0"
