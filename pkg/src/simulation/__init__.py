"""
Simulation Module
=================
Slot-based crowdsourcing scheduler.

Available components:
- Competence, Sample, AssignmentLedger, SimConfig: core model
- err_single, accuracy, f_value, sigma: utility calculus
- run_genie: greedy matcher with known competences
- run_two_phase: learn-then-match scheduler

Usage:
    from src.simulation import load_config, run_genie
    from src.data_collection import gen_from_config

    config = load_config("config/synthetic.cfg")
    stream, competences = gen_from_config(config)
    ledger, utility = run_genie(config, stream, competences)
"""

from .model import AssignmentLedger, Competence, ResourceBlock, Sample, SimConfig, load_config, save_config
from .utility import accuracy, err_set, err_single, f_value, sigma, weighted_majority
from .greedy import run_genie, run_slot
from .scheduler import PhasePlan, run_two_phase

__all__ = [
    "AssignmentLedger",
    "Competence",
    "ResourceBlock",
    "Sample",
    "SimConfig",
    "load_config",
    "save_config",
    "accuracy",
    "err_set",
    "err_single",
    "f_value",
    "sigma",
    "weighted_majority",
    "run_genie",
    "run_slot",
    "PhasePlan",
    "run_two_phase",
]
