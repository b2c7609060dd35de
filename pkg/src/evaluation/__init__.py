"""
Evaluation Module
=================
Brute-force oracle checks and genie vs two-phase benchmarks.
"""

from .bench import ExperimentResult, run_pair, sweep_horizon, sweep_tl
from .oracle import TinyInstance, brute_force_opt, delta_gap, lemma2_harness

__all__ = [
    "ExperimentResult",
    "run_pair",
    "sweep_horizon",
    "sweep_tl",
    "TinyInstance",
    "brute_force_opt",
    "delta_gap",
    "lemma2_harness",
]
