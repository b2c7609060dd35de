"""
Utility Calculus
================
Closed-form quantities of the one-coin labelling model:
- err_single / err_set: additive error mass of a classifier set
- accuracy: upper-bound decision accuracy 1 - exp(-c * err)
- f_value: weighted accuracy minus accumulated delay for one sample
- sigma: marginal gain of one more block for one sample
- weighted_majority: log-odds weighted vote over drawn labels
- p_from_err: numerical inverse of err_single on (1/2, 1)
"""

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional, Sequence, Union

import numpy as np
from scipy.optimize import brentq

from src.simulation.errors import ContractViolation, DomainError
from src.simulation.model import AssignmentLedger, Competence, ResourceBlock, Sample

Number = Union[float, Competence]


def _err_unchecked(p: float) -> float:
    return (p - 0.5) * math.log(p / (1.0 - p))


def err_single(p: Number) -> float:
    """(p - 1/2) * ln(p / (1 - p)); strictly increasing on (1/2, 1)."""
    p = float(p)
    if not 0.5 < p < 1.0:
        raise DomainError(f"err_single needs p in (0.5, 1), got {p}")
    return _err_unchecked(p)


def err_set(competences: Iterable[Number]) -> float:
    return math.fsum(err_single(p) for p in competences)


def accuracy(err: float, c: float = 1.0) -> float:
    return -math.expm1(-c * err)


def p_from_err(err: float, upper: float = 1.0 - 1e-15) -> float:
    """Competence whose error mass equals ``err``."""
    if err <= 0:
        raise DomainError(f"err must be positive, got {err}")
    if err >= err_single(upper):
        raise DomainError(f"err {err} beyond the representable range")
    return brentq(
        lambda p: _err_unchecked(p) - err,
        0.5,
        upper,
        xtol=1e-15,
        rtol=4 * np.finfo(float).eps,
    )


@dataclass(frozen=True)
class UtilityBreakdown:
    accuracy_term: float
    delay_term: float

    @property
    def value(self) -> float:
        return self.accuracy_term - self.delay_term

    def __float__(self) -> float:
        return self.value


def f_value(
    sample: Sample,
    blocks: Sequence[ResourceBlock],
    competences: Sequence[Number],
    c: float = 1.0,
) -> UtilityBreakdown:
    """Weighted accuracy of the block set minus its delay beyond arrival."""
    if not blocks:
        return UtilityBreakdown(0.0, 0.0)
    classifiers = [b.classifier for b in blocks]
    if len(set(classifiers)) != len(classifiers):
        raise ContractViolation(f"Block set of sample {sample.id} repeats a classifier: {classifiers}")
    early = [b for b in blocks if b.slot < sample.arrival_slot]
    if early:
        raise ContractViolation(
            f"Sample {sample.id} arrives at {sample.arrival_slot}, block at slot {early[0].slot}"
        )
    err = err_set(competences[b.classifier] for b in blocks)
    delay = max(b.slot for b in blocks) - sample.arrival_slot
    return UtilityBreakdown(sample.weight * accuracy(err, c), float(delay))


def u_increment(current_f: float, candidate_f: float) -> float:
    return max(0.0, candidate_f - current_f)


def sigma(
    sample: Sample,
    assigned: Sequence[ResourceBlock],
    classifier: int,
    slot: int,
    competences: Sequence[Number],
    c: float = 1.0,
) -> float:
    """
    Marginal gain of giving ``sample`` classifier ``classifier`` at ``slot``.

    Equals f(assigned + block) - f(assigned) whenever ``slot`` is not before
    the latest assigned block.
    """
    used = {b.classifier for b in assigned}
    if classifier in used:
        raise ContractViolation(f"Classifier {classifier} already used by sample {sample.id}")
    if classifier not in sample.eligible:
        raise ContractViolation(f"Classifier {classifier} not eligible for sample {sample.id}")

    latest = max((b.slot for b in assigned), default=sample.arrival_slot)
    residual = math.exp(-c * err_set(competences[b.classifier] for b in assigned))
    gain = accuracy(err_single(competences[classifier]), c)
    return sample.weight * residual * gain - max(0, slot - latest)


def utility_by_sample(
    ledger: AssignmentLedger,
    samples: Mapping[int, Sample],
    competences: Sequence[Number],
    c: float = 1.0,
) -> dict:
    """f of every sample's final block set, keyed by sample id."""
    return {
        sid: f_value(samples[sid], ledger.blocks_of(sid), competences, c).value
        for sid in ledger.sample_ids()
    }


def total_utility(
    ledger: AssignmentLedger,
    samples: Mapping[int, Sample],
    competences: Sequence[Number],
    c: float = 1.0,
) -> float:
    return math.fsum(utility_by_sample(ledger, samples, competences, c).values())


def weighted_majority(labels: Mapping[int, int], competences: Sequence[Number]) -> int:
    """
    Sign of sum_m ln(p_m / (1 - p_m)) * label_m.

    Ties (including no labels) resolve to -1.
    """
    score = math.fsum(
        math.log(float(competences[m]) / (1.0 - float(competences[m]))) * label
        for m, label in labels.items()
    )
    return 1 if score > 0 else -1


def decision_of(sample: Sample, ledger: AssignmentLedger, competences: Sequence[Number]) -> Optional[int]:
    """Weighted-majority decision from the labels the ledger bought, None if unlabelled."""
    blocks = ledger.blocks_of(sample.id)
    if not blocks:
        return None
    return weighted_majority({b.classifier: sample.label_of(b.classifier) for b in blocks}, competences)


def decision_accuracy(
    ledger: AssignmentLedger,
    samples: Mapping[int, Sample],
    competences: Sequence[Number],
) -> float:
    """Fraction of labelled samples whose decision matches the true label."""
    hits, total = 0, 0
    for sid in ledger.sample_ids():
        decision = decision_of(samples[sid], ledger, competences)
        if decision is None:
            continue
        total += 1
        hits += decision == samples[sid].true_label
    return hits / total if total else float("nan")
