"""
Two-Phase Scheduler
===================
Learn-then-match scheduling with unknown competences.

Phase I (slots 1..T_L): one random arrival per slot is labelled by every
classifier holding a label for it; all other arrivals leave unserved.
Phase II (slots T_L+1..T): the greedy matcher runs on competences
estimated from the Phase I labels.
"""

from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from loguru import logger

from src.learning.online_learn import LabelMatrix, LearnedCompetences, online_learn
from src.simulation.errors import EstimationError, SchedulingError
from src.simulation.greedy import run_genie
from src.simulation.model import AssignmentLedger, SimConfig, Sample, make_ledger

Learner = Callable[[LabelMatrix], LearnedCompetences]


@dataclass(frozen=True)
class PhasePlan:
    t_learn: int
    horizon: int

    def __post_init__(self):
        if not 1 <= self.t_learn < self.horizon:
            raise SchedulingError(
                f"Learning length {self.t_learn} must satisfy 1 <= T_L < T = {self.horizon}"
            )

    @classmethod
    def from_config(cls, config: SimConfig) -> "PhasePlan":
        if config.learning_len is None:
            raise SchedulingError("Config has no learning_len")
        return cls(config.learning_len, config.horizon)


def learning_phase(
    arrivals: Sequence[Sequence[Sample]],
    plan: PhasePlan,
    competences_true: Sequence[float],
    seed: int,
    ledger: Optional[AssignmentLedger] = None,
) -> LabelMatrix:
    """
    Pick one arrival per learning slot and collect all its labels.

    Every Phase I arrival, picked or not, exits in the slot it arrived with
    no blocks in ``ledger``. Slots without arrivals contribute no row.
    """
    rng = np.random.default_rng(seed)
    n_classifiers = len(competences_true)
    rows: List[np.ndarray] = []
    sample_ids: List[int] = []

    for t in range(1, plan.t_learn + 1):
        batch = arrivals[t - 1] if t - 1 < len(arrivals) else ()
        if batch:
            chosen = batch[int(rng.integers(len(batch)))]
            rows.append(np.asarray(chosen.drawn_labels, dtype=np.int8))
            sample_ids.append(chosen.id)
        if ledger is not None:
            for sample in batch:
                ledger.record_exit(sample.id, t)

    if rows and any(len(r) != n_classifiers for r in rows):
        raise SchedulingError("Arrival labels do not match the number of classifiers")

    labels = np.vstack(rows) if rows else np.zeros((0, n_classifiers), dtype=np.int8)
    return LabelMatrix.from_signed(labels, sample_ids=sample_ids)


def run_two_phase(
    config: SimConfig,
    arrivals: Sequence[Sequence[Sample]],
    competences_true: Sequence[float],
    plan: PhasePlan,
    seed: Optional[int] = None,
    learner: Optional[Learner] = None,
    debug: bool = False,
) -> Tuple[AssignmentLedger, float, LearnedCompetences]:
    """
    Learn for T_L slots, then match greedily with the estimated competences.

    Args:
        learner: replaces online_learn (a perfect learner returns the true
            competences)

    Returns:
        (ledger, Phase II utility, learned competences)
    """
    if plan.horizon != config.horizon:
        raise SchedulingError(f"Plan horizon {plan.horizon} != config horizon {config.horizon}")
    seed = config.seed if seed is None else seed
    ledger = make_ledger(len(competences_true), plan.horizon)

    data = learning_phase(arrivals, plan, competences_true, seed, ledger=ledger)
    try:
        if learner is not None:
            learned = learner(data)
        else:
            learned = online_learn(
                data,
                K=config.n_classes,
                max_iters=config.learn_max_iters,
                tol=config.learn_tol,
                literal_flip=config.literal_flip,
            )
    except EstimationError as e:
        raise SchedulingError(
            f"Estimation failed after T_L={plan.t_learn} ({data.n_samples} labelled samples): {e}"
        ) from e

    logger.debug(
        f"T_L={plan.t_learn}: learned {len(learned.p_hat)} competences "
        f"in {learned.iterations_run} iterations"
    )
    _, utility = run_genie(
        config,
        arrivals,
        learned.p_hat,
        start_slot=plan.t_learn + 1,
        ledger=ledger,
        debug=debug,
    )
    return ledger, utility, learned
