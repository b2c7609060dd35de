"""
Data Collection Module
======================
Arrival streams for the scheduler.

Available sources:
- gen_synthetic: seeded Poisson arrivals with pre-drawn one-coin labels
- load_dataset / replay_stream: crowdsourcing triple files replayed as arrivals
"""

from .synthetic import ArrivalStream, gen_from_config, gen_synthetic
from .datasets import DatasetTable, load_dataset, replay_stream

__all__ = [
    "ArrivalStream",
    "gen_from_config",
    "gen_synthetic",
    "DatasetTable",
    "load_dataset",
    "replay_stream",
]
