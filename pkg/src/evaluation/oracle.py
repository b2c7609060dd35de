"""
Desk-Scale Oracle
=================
Ground-truth checks on tiny instances:
- brute_force_opt: offline optimum by branch-and-bound over per-sample
  block choices with a per-(classifier, slot) capacity check
- delta_gap / threshold_gap: smallest positive separation between the
  marginal gains the greedy matcher compares
- lemma2_harness: greedy is unchanged when every error mass is perturbed
  within delta / (6 * w_max * 2^M)
- exit soundness: no retired sample could still gain from a later block
- verify_* suites used by `run_experiments.py verify`
"""

import itertools
import math
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from loguru import logger

from src.data_collection.synthetic import ArrivalStream, gen_synthetic
from src.simulation.errors import DeltaUndefinedError, InstanceTooLargeError
from src.simulation.greedy import run_genie
from src.simulation.model import AssignmentLedger, ResourceBlock, SimConfig, Sample, make_ledger
from src.simulation.utility import err_set, err_single, f_value, p_from_err, sigma, u_increment

ENUMERATION_LIMIT = 10**7
GAP_FLOOR = 1e-12
COMPETITIVE_SLACK = 1e-9


@dataclass
class TinyInstance:
    """A small arrival stream with known competences."""

    stream: ArrivalStream
    competences: List[float]
    c: float = 1.0

    @property
    def horizon(self) -> int:
        return self.stream.horizon

    @property
    def n_classifiers(self) -> int:
        return len(self.competences)

    @property
    def samples(self) -> List[Sample]:
        return self.stream.samples()

    @property
    def max_weight(self) -> float:
        return max(s.weight for s in self.samples)

    def config(self) -> SimConfig:
        return SimConfig(
            horizon=self.horizon,
            n_classifiers=self.n_classifiers,
            competences=self.competences,
            cost_c=self.c,
        )


def make_instance(
    competences: Sequence[float],
    samples: Sequence[Tuple[int, float]],
    horizon: int,
    c: float = 1.0,
) -> TinyInstance:
    """Instance from (arrival_slot, weight) pairs; every classifier eligible, truth +1."""
    per_slot: List[List[Sample]] = [[] for _ in range(horizon)]
    M = len(competences)
    for sid, (slot, weight) in enumerate(samples):
        per_slot[slot - 1].append(Sample(sid, slot, float(weight), 1, np.ones(M, dtype=np.int8)))
    return TinyInstance(ArrivalStream(per_slot), list(competences), c)


def random_tiny_instance(
    rng: np.random.Generator,
    max_classifiers: int = 3,
    max_slots: int = 4,
    max_samples: int = 3,
) -> TinyInstance:
    M = int(rng.integers(1, max_classifiers + 1))
    T = int(rng.integers(1, max_slots + 1))
    n = int(rng.integers(1, max_samples + 1))
    competences = [float(p) for p in rng.uniform(0.55, 0.94, size=M)]
    slots = sorted(int(t) for t in rng.integers(1, T + 1, size=n))
    weights = [float(w) for w in rng.uniform(1.0, 10.0, size=n)]
    return make_instance(competences, list(zip(slots, weights)), T)


# ============================================================================
# Brute-force optimum
# ============================================================================

def _sample_options(sample: Sample, inst: TinyInstance):
    """Every block set the sample could receive, as (f, capacity mask, blocks)."""
    T = inst.horizon
    slots = [None] + list(range(sample.arrival_slot, T + 1))
    eligible = sorted(sample.eligible)
    options = []
    for choice in itertools.product(slots, repeat=len(eligible)):
        blocks = [ResourceBlock(m, t) for m, t in zip(eligible, choice) if t is not None]
        value = f_value(sample, blocks, inst.competences, inst.c).value
        if blocks and value <= 0:
            continue  # the empty set does at least as well with no capacity
        mask = 0
        for b in blocks:
            mask |= 1 << (b.classifier * T + b.slot - 1)
        options.append((value, mask, blocks))
    options.sort(key=lambda o: -o[0])
    return options


def enumeration_size(inst: TinyInstance) -> int:
    return math.prod(
        (inst.horizon - s.arrival_slot + 2) ** len(s.eligible) for s in inst.samples
    )


def brute_force_opt(inst: TinyInstance, limit: int = ENUMERATION_LIMIT) -> Tuple[float, AssignmentLedger]:
    """
    Offline optimum over all capacity-feasible block assignments.

    Raises:
        InstanceTooLargeError: if the raw enumeration exceeds ``limit``
    """
    size = enumeration_size(inst)
    if size > limit:
        raise InstanceTooLargeError(f"Enumeration size {size} exceeds {limit}")

    samples = inst.samples
    options = [_sample_options(s, inst) for s in samples]
    best_single = [opts[0][0] if opts else 0.0 for opts in options]
    suffix = [0.0] * (len(samples) + 1)
    for k in range(len(samples) - 1, -1, -1):
        suffix[k] = suffix[k + 1] + max(0.0, best_single[k])

    best_value = 0.0
    best_choice: List[Optional[list]] = [None] * len(samples)
    chosen: List[Optional[list]] = [None] * len(samples)

    def search(k: int, used: int, value: float):
        nonlocal best_value, best_choice
        if k == len(samples):
            if value > best_value:
                best_value = value
                best_choice = list(chosen)
            return
        for f, mask, blocks in options[k]:
            if value + f + suffix[k + 1] <= best_value:
                break
            if mask & used:
                continue
            chosen[k] = blocks
            search(k + 1, used | mask, value + f)
        chosen[k] = None

    search(0, 0, 0.0)

    ledger = make_ledger(inst.n_classifiers, inst.horizon)
    for sample, blocks in zip(samples, best_choice):
        blocks = blocks or []
        for b in sorted(blocks, key=lambda b: (b.slot, b.classifier)):
            ledger.add(sample, b.classifier, b.slot)
        ledger.record_exit(sample.id, max((b.slot for b in blocks), default=sample.arrival_slot))
    return best_value, ledger


# ============================================================================
# Gap computations
# ============================================================================

def _reward_table(sample: Sample, m: int, inst: TinyInstance) -> np.ndarray:
    """w * exp(-c err(V)) * (1 - exp(-c err_m)) for every V of eligible classifiers other than m."""
    others = sorted(sample.eligible - {m})
    gain = -math.expm1(-inst.c * err_single(inst.competences[m]))
    values = []
    for r in range(len(others) + 1):
        for subset in itertools.combinations(others, r):
            residual = math.exp(-inst.c * err_set(inst.competences[j] for j in subset))
            values.append(sample.weight * residual * gain)
    return np.asarray(values)


def delta_gap(inst: TinyInstance) -> float:
    """
    Smallest positive |rho_i - rho_k| over contending pairs.

    A contending pair is two distinct samples, one classifier eligible for
    both, any classifier subsets excluding it, and delays in 0..T-1.
    """
    T = inst.horizon
    offsets = np.arange(-(T - 1), T, dtype=float)
    best = math.inf

    for a, b in itertools.combinations(inst.samples, 2):
        for m in sorted(a.eligible & b.eligible):
            diff = _reward_table(a, m, inst)[:, None] - _reward_table(b, m, inst)[None, :]
            gaps = np.abs(diff[:, :, None] + offsets[None, None, :])
            positive = gaps[gaps > GAP_FLOOR]
            if positive.size:
                best = min(best, float(positive.min()))

    if not math.isfinite(best):
        raise DeltaUndefinedError("No contending pair with a positive gap")
    return best


def threshold_gap(inst: TinyInstance) -> float:
    """Smallest positive |rho| over single samples; guards the stop and exit tests."""
    delays = np.arange(0, inst.horizon + 1, dtype=float)
    best = math.inf
    for sample in inst.samples:
        for m in sorted(sample.eligible):
            margins = np.abs(_reward_table(sample, m, inst)[:, None] - delays[None, :])
            positive = margins[margins > GAP_FLOOR]
            if positive.size:
                best = min(best, float(positive.min()))
    if not math.isfinite(best):
        raise DeltaUndefinedError("No sample with a positive marginal gain")
    return best


def perturbation_bound(inst: TinyInstance) -> float:
    """
    Perturbation radius on error masses that cannot change any greedy decision.

    delta / (6 w_max 2^M), with delta tightened by the threshold gap and
    capped below half the smallest competence gap so the scan order holds.
    """
    gaps = [threshold_gap(inst)]
    try:
        gaps.append(delta_gap(inst))
    except DeltaUndefinedError:
        pass
    bound = min(gaps) / (6.0 * inst.max_weight * 2**inst.n_classifiers * max(1.0, inst.c))

    errs = sorted(err_single(p) for p in inst.competences)
    spacing = [hi - lo for lo, hi in zip(errs, errs[1:]) if hi > lo]
    if spacing:
        bound = min(bound, min(spacing) / 2.0 * (1 - 1e-6))
    return bound


def lemma2_harness(inst: TinyInstance, n_trials: int, seed: int, scale: float = 1.0) -> int:
    """
    Number of trials whose perturbed-competence greedy ledger differs from
    the true one. Each trial shifts every err_m uniformly within
    scale * perturbation_bound.
    """
    rng = np.random.default_rng(seed)
    config = inst.config()
    reference, _ = run_genie(config, inst.stream, inst.competences)
    radius = scale * perturbation_bound(inst)
    errs = np.array([err_single(p) for p in inst.competences])

    differences = 0
    for trial in range(n_trials):
        shifted = errs + rng.uniform(-radius, radius, size=len(errs))
        perturbed = [p_from_err(e) for e in shifted]
        ledger, _ = run_genie(config, inst.stream, perturbed)
        if not ledger.same_assignments(reference):
            differences += 1
            logger.debug(f"trial {trial}: ledger changed at radius {radius:.3e}")

    if differences and scale > 1.0:
        logger.warning(f"{differences}/{n_trials} ledgers changed at {scale}x the bound")
    return differences


# ============================================================================
# Suites
# ============================================================================

def verify_competitive(n_instances: int = 200, seed: int = 7) -> pd.DataFrame:
    """Greedy vs brute-force OPT on random tiny instances."""
    rng = np.random.default_rng(seed)
    rows = []
    for k in range(n_instances):
        inst = random_tiny_instance(rng)
        _, greedy_value = run_genie(inst.config(), inst.stream, inst.competences)
        opt_value, _ = brute_force_opt(inst)
        rows.append(
            {
                "instance": k,
                "n_classifiers": inst.n_classifiers,
                "horizon": inst.horizon,
                "n_samples": len(inst.samples),
                "greedy": greedy_value,
                "opt": opt_value,
                "ratio": greedy_value / opt_value if opt_value > 0 else 1.0,
                "opt_dominates": opt_value + COMPETITIVE_SLACK >= greedy_value,
                "half_competitive": greedy_value + COMPETITIVE_SLACK >= 0.5 * opt_value,
            }
        )
    return pd.DataFrame(rows)


def verify_perturbation(n_trials: int = 100, seed: int = 11, max_classifiers: int = 4) -> pd.DataFrame:
    """One perturbation trial per random instance (M up to 4)."""
    rng = np.random.default_rng(seed)
    rows = []
    for k in range(n_trials):
        inst = random_tiny_instance(rng, max_classifiers=max_classifiers)
        rows.append(
            {
                "trial": k,
                "n_classifiers": inst.n_classifiers,
                "bound": perturbation_bound(inst),
                "differences": lemma2_harness(inst, 1, seed=seed + k),
            }
        )
    return pd.DataFrame(rows)


def _random_chain(rng: np.random.Generator, M: int):
    competences = [float(p) for p in rng.uniform(0.55, 0.94, size=M)]
    arrival = int(rng.integers(1, 4))
    sample = Sample(0, arrival, float(rng.uniform(1.0, 10.0)), 1, np.ones(M, dtype=np.int8))

    order = [int(m) for m in rng.permutation(M)]
    chain_len = int(rng.integers(0, M))  # leaves at least one classifier for x
    slots = np.sort(rng.integers(arrival, arrival + 6, size=chain_len))
    chain = [ResourceBlock(m, int(t)) for m, t in zip(order[:chain_len], slots)]
    prefix = int(rng.integers(0, chain_len + 1))
    return sample, competences, chain[:prefix], chain, order[chain_len]


def verify_submodularity(n_cases: int = 1000, seed: int = 3, max_classifiers: int = 8) -> pd.DataFrame:
    """
    Diminishing returns of u along incremental chains S <= T.

    The extra block x lands no later than the latest block of S, so it adds
    no delay to either set.
    """
    rng = np.random.default_rng(seed)
    rows = []
    for k in range(n_cases):
        M = int(rng.integers(1, max_classifiers + 1))
        sample, ps, small, large, x_classifier = _random_chain(rng, M)
        latest = max((b.slot for b in small), default=sample.arrival_slot)
        x = ResourceBlock(x_classifier, int(rng.integers(sample.arrival_slot, latest + 1)))

        f_small = f_value(sample, small, ps).value
        f_large = f_value(sample, large, ps).value
        inc_small = u_increment(f_small, f_value(sample, small + [x], ps).value)
        inc_large = u_increment(f_large, f_value(sample, large + [x], ps).value)
        rows.append(
            {
                "case": k,
                "inc_small": inc_small,
                "inc_large": inc_large,
                "ok": inc_large <= inc_small + 1e-9,
            }
        )
    return pd.DataFrame(rows)


def verify_exit_soundness(horizon: int = 2000, seed: int = 1, n_classifiers: int = 30) -> pd.DataFrame:
    """
    Replay every sample retired before T against its unused classifiers.

    A block's gain only drops as the slot moves later, so the slot after
    the exit bounds every later slot. One row per retired sample.
    """
    stream, ps = gen_synthetic(horizon, seed, n_classifiers=n_classifiers)
    config = SimConfig(horizon=horizon, n_classifiers=len(ps), competences=ps)
    ledger, _ = run_genie(config, stream, ps)

    rows = []
    for sid, exit_slot in sorted(ledger.exits.items()):
        if exit_slot >= horizon:
            continue
        sample = stream.by_id[sid]
        assigned = ledger.blocks_of(sid)
        remaining = sorted(sample.eligible - ledger.used_classifiers(sid))
        best = max((sigma(sample, assigned, m, exit_slot + 1, ps) for m in remaining), default=-math.inf)
        rows.append({"sample_id": sid, "exit_slot": exit_slot, "best_sigma": best, "ok": best <= GAP_FLOOR})
    logger.info(f"Exit soundness: {len(rows)} retired samples checked over T={horizon}")
    return pd.DataFrame(rows, columns=["sample_id", "exit_slot", "best_sigma", "ok"])


# ============================================================================
# Golden values
# ============================================================================

def golden_table(n_instances: int = 50, seed: int = 2024) -> pd.DataFrame:
    rng = np.random.default_rng(seed)
    rows = []
    for k in range(n_instances):
        inst = random_tiny_instance(rng)
        opt_value, _ = brute_force_opt(inst)
        rows.append({"instance": k, "seed": seed, "opt": round(opt_value, 10)})
    return pd.DataFrame(rows)


def write_golden(path: Union[str, Path], n_instances: int = 50, seed: int = 2024) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    golden_table(n_instances, seed).to_csv(path, index=False)
    return path


def diff_golden(path: Union[str, Path], tol: float = 1e-9) -> List[int]:
    """Instances whose recomputed OPT no longer matches the golden file."""
    stored = pd.read_csv(path)
    seed = int(stored["seed"].iloc[0])
    fresh = golden_table(len(stored), seed)
    mismatch = np.abs(fresh["opt"].to_numpy() - stored["opt"].to_numpy()) > tol
    return [int(i) for i in stored["instance"][mismatch]]
