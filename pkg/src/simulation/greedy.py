"""
Greedy Online Matcher
=====================
Slot-by-slot greedy assignment of classifiers to outstanding samples.

Each slot:
1. New arrivals join the outstanding pool
2. Classifiers are scanned by decreasing competence; each takes the
   outstanding sample with the largest marginal gain (lowest id on ties)
   if that gain is positive, otherwise the scan stops
3. Samples that can no longer gain anything next slot exit

run_genie drives the matcher over a whole arrival stream with known
competences and returns the ledger and total utility.
"""

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Set, Tuple, Union

import pandas as pd
from loguru import logger

from src.simulation.model import (
    AssignmentLedger,
    Competence,
    SimConfig,
    Sample,
    classifier_order,
    competence_values,
    make_ledger,
)
from src.simulation.utility import err_single, f_value

Number = Union[float, Competence]

TRACE_COLUMNS = ["slot", "event", "sample_id", "classifier_id", "sigma", "f_after"]


@dataclass
class SlotState:
    """Matcher state carried between slots."""

    ledger: AssignmentLedger
    outstanding: Dict[int, Sample] = field(default_factory=dict)
    used: Dict[int, Set[int]] = field(default_factory=dict)
    latest_assign_slot: Dict[int, Optional[int]] = field(default_factory=dict)
    current_f: Dict[int, float] = field(default_factory=dict)
    free: Set[int] = field(default_factory=set)
    total_utility: float = 0.0
    trace: Optional[List[dict]] = None

    # exp(-c * err(assigned)) per outstanding sample
    residual: Dict[int, float] = field(default_factory=dict, repr=False)

    @classmethod
    def start(cls, n_classifiers: int, horizon: int, trace: bool = False) -> "SlotState":
        return cls(ledger=make_ledger(n_classifiers, horizon), trace=[] if trace else None)

    def admit(self, sample: Sample) -> None:
        self.outstanding[sample.id] = sample
        self.used[sample.id] = set()
        self.latest_assign_slot[sample.id] = None
        self.current_f[sample.id] = 0.0
        self.residual[sample.id] = 1.0

    def delay_reference(self, sample_id: int) -> int:
        latest = self.latest_assign_slot[sample_id]
        return self.outstanding[sample_id].arrival_slot if latest is None else latest

    def retire(self, sample_id: int, slot: int) -> None:
        self.ledger.record_exit(sample_id, slot)
        for table in (self.outstanding, self.used, self.latest_assign_slot, self.current_f, self.residual):
            table.pop(sample_id, None)

    def log_event(self, slot, event, sample_id, classifier_id=None, sigma=None):
        if self.trace is None:
            return
        self.trace.append(
            {
                "slot": slot,
                "event": event,
                "sample_id": sample_id,
                "classifier_id": classifier_id,
                "sigma": sigma,
                "f_after": self.current_f.get(sample_id),
            }
        )


@dataclass
class MatcherOutput:
    assignments: List[Tuple[int, int]]
    exited: Set[int]
    sigmas: List[float] = field(default_factory=list)


def _gains(competences: Sequence[float], c: float) -> List[float]:
    return [-math.expm1(-c * err_single(p)) for p in competences]


def _sigma_at(state: SlotState, sample_id: int, gain: float, slot: int) -> float:
    sample = state.outstanding[sample_id]
    delay = max(0, slot - state.delay_reference(sample_id))
    return sample.weight * state.residual[sample_id] * gain - delay


def run_slot(
    state: SlotState,
    arrivals: Sequence[Sample],
    t: int,
    competences: Sequence[Number],
    c: float = 1.0,
    debug: bool = False,
) -> MatcherOutput:
    ps = competence_values(competences)
    gains = _gains(ps, c)

    for sample in arrivals:
        state.admit(sample)
        state.log_event(t, "arrive", sample.id)

    state.free = set(range(len(ps)))
    pool = sorted(state.outstanding)
    assignments, sigmas = [], []

    for m in classifier_order(ps):
        best_id, best_sigma = None, -math.inf
        for sid in pool:
            if m in state.used[sid] or m not in state.outstanding[sid].eligible:
                continue
            value = _sigma_at(state, sid, gains[m], t)
            if value > best_sigma:
                best_id, best_sigma = sid, value

        # nobody can take this classifier; the next one may still be useful
        if best_id is None:
            continue
        if best_sigma <= 0:
            break

        state.ledger.add(state.outstanding[best_id], m, t)
        state.used[best_id].add(m)
        state.residual[best_id] *= math.exp(-c * err_single(ps[m]))
        state.latest_assign_slot[best_id] = t
        state.current_f[best_id] += best_sigma
        state.total_utility += best_sigma
        state.free.discard(m)

        assignments.append((best_id, m))
        sigmas.append(best_sigma)
        state.log_event(t, "assign", best_id, m, best_sigma)
        logger.trace(f"slot {t}: classifier {m} -> sample {best_id} (sigma={best_sigma:.6f})")

    if debug:
        _check_running_utility(state, ps, c)

    exited = exit_sweep(state, t, ps, c)
    return MatcherOutput(assignments=assignments, exited=exited, sigmas=sigmas)


def exit_sweep(
    state: SlotState,
    t: int,
    competences: Sequence[Number],
    c: float = 1.0,
) -> Set[int]:
    """Retire samples with no positive gain left at slot t + 1."""
    ps = competence_values(competences)
    gains = _gains(ps, c)
    exited = set()

    for sid in sorted(state.outstanding):
        sample = state.outstanding[sid]
        remaining = [m for m in sample.eligible if m not in state.used[sid]]
        best = max((_sigma_at(state, sid, gains[m], t + 1) for m in remaining), default=None)
        if best is None or best <= 0:
            exited.add(sid)

    for sid in sorted(exited):
        state.log_event(t, "exit", sid)
        state.retire(sid, t)
    return exited


def _check_running_utility(state: SlotState, competences: Sequence[float], c: float) -> None:
    for sid, sample in state.outstanding.items():
        recomputed = f_value(sample, state.ledger.blocks_of(sid), competences, c).value
        if abs(recomputed - state.current_f[sid]) > 1e-9:
            raise AssertionError(
                f"Sample {sid}: running utility {state.current_f[sid]} != recomputed {recomputed}"
            )


def write_trace(rows: List[dict], path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pd.DataFrame(rows, columns=TRACE_COLUMNS).to_csv(path, index=False)
    return path


def run_genie(
    config: SimConfig,
    arrivals: Sequence[Sequence[Sample]],
    competences: Sequence[Number],
    start_slot: int = 1,
    ledger: Optional[AssignmentLedger] = None,
    trace_path: Optional[Union[str, Path]] = None,
    debug: bool = False,
) -> Tuple[AssignmentLedger, float]:
    """
    Run the greedy matcher over slots start_slot..T with the given competences.

    ``arrivals[t - 1]`` holds the samples arriving at slot t. Samples arriving
    before ``start_slot`` are not seen. When ``ledger`` is given the matcher
    writes into it (two-phase runs share one ledger across phases). Samples
    still outstanding after slot T exit at T.

    Returns:
        (ledger, total utility of the samples matched here)
    """
    ps = competence_values(competences)
    T = config.horizon
    state = SlotState.start(len(ps), T, trace=trace_path is not None)
    if ledger is not None:
        state.ledger = ledger

    for t in range(start_slot, T + 1):
        batch = arrivals[t - 1] if t - 1 < len(arrivals) else ()
        run_slot(state, batch, t, ps, config.cost_c, debug=debug)

    for sid in sorted(state.outstanding):
        state.log_event(T, "exit", sid)
        state.retire(sid, T)

    if trace_path is not None:
        write_trace(state.trace, trace_path)

    logger.debug(
        f"genie run slots {start_slot}..{T}: {len(state.ledger)} blocks, utility={state.total_utility:.4f}"
    )
    return state.ledger, state.total_utility
