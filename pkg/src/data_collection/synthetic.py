"""
Synthetic Arrival Streams
=========================
Seeded generator for crowdsourcing arrival streams.

Each slot receives a Poisson number of samples; every sample gets a weight
drawn uniformly from the weight support, a fair +1/-1 truth, and one
pre-drawn label per classifier that is correct with that classifier's
competence. Same seed, same stream.
"""

import hashlib
from dataclasses import dataclass
from functools import cached_property
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from loguru import logger

from src.simulation.model import SimConfig, Sample, default_competences


@dataclass(eq=False)
class ArrivalStream:
    """Samples grouped by arrival slot; ``stream[t - 1]`` is slot t."""

    per_slot: List[List[Sample]]
    seed: Optional[int] = None
    label_source: str = "truth"

    def __len__(self) -> int:
        return len(self.per_slot)

    def __getitem__(self, index):
        return self.per_slot[index]

    @property
    def horizon(self) -> int:
        return len(self.per_slot)

    def samples(self) -> List[Sample]:
        return [s for batch in self.per_slot for s in batch]

    @cached_property
    def by_id(self) -> Dict[int, Sample]:
        return {s.id: s for s in self.samples()}

    @property
    def n_samples(self) -> int:
        return sum(len(batch) for batch in self.per_slot)

    @property
    def realized_mean_arrivals(self) -> float:
        return self.n_samples / self.horizon if self.horizon else 0.0

    @property
    def realized_mean_weight(self) -> float:
        weights = [s.weight for s in self.samples()]
        return float(np.mean(weights)) if weights else float("nan")

    @property
    def max_arrivals(self) -> int:
        return max((len(batch) for batch in self.per_slot), default=0)

    def digest(self) -> str:
        """sha256 over ids, slots, weights, truths and drawn labels."""
        h = hashlib.sha256()
        for sample in self.samples():
            h.update(f"{sample.id}:{sample.arrival_slot}:{sample.weight!r}:{sample.true_label};".encode())
            h.update(sample.drawn_labels.tobytes())
        return h.hexdigest()

    def to_manifest(self) -> pd.DataFrame:
        return pd.DataFrame(
            [
                {
                    "sample_id": s.id,
                    "arrival_slot": s.arrival_slot,
                    "weight": s.weight,
                    "true_label": s.true_label,
                    "n_labels": len(s.eligible),
                }
                for s in self.samples()
            ],
            columns=["sample_id", "arrival_slot", "weight", "true_label", "n_labels"],
        )


def gen_synthetic(
    T: int,
    seed: int,
    n_classifiers: int = 30,
    competences: Optional[Sequence[float]] = None,
    rate: float = 5.0,
    weight_support: Optional[Sequence[int]] = None,
    shuffle: bool = False,
    arrival_cap: Optional[int] = None,
) -> Tuple[ArrivalStream, List[float]]:
    """
    Generate T slots of Poisson(rate) arrivals.

    Args:
        competences: explicit competences; defaults to 0.9 - 0.005 m
        shuffle: permute the competences across classifiers (separate seeded stream)
        arrival_cap: truncate each slot to at most this many arrivals

    Returns:
        (stream, competences)
    """
    if T < 1:
        raise ValueError(f"Horizon must be >= 1, got {T}")
    ps = list(competences) if competences is not None else default_competences(n_classifiers)
    support = np.asarray(list(weight_support) if weight_support is not None else range(3, 11))

    stream_seq, shuffle_seq = np.random.SeedSequence(seed).spawn(2)
    rng = np.random.default_rng(stream_seq)
    if shuffle:
        ps = [ps[i] for i in np.random.default_rng(shuffle_seq).permutation(len(ps))]

    counts = rng.poisson(rate, size=T)
    if arrival_cap is not None:
        counts = np.minimum(counts, arrival_cap)
    n = int(counts.sum())

    weights = rng.choice(support, size=n)
    truth = rng.choice(np.array([1, -1]), size=n)
    correct = rng.random((n, len(ps))) < np.asarray(ps)[None, :]
    labels = np.where(correct, truth[:, None], -truth[:, None]).astype(np.int8)

    per_slot: List[List[Sample]] = []
    sid = 0
    for t, count in enumerate(counts, start=1):
        batch = []
        for _ in range(int(count)):
            batch.append(Sample(sid, t, float(weights[sid]), int(truth[sid]), labels[sid]))
            sid += 1
        per_slot.append(batch)

    logger.debug(f"Generated {n} samples over {T} slots (seed={seed})")
    return ArrivalStream(per_slot, seed=seed), ps


def gen_from_config(config: SimConfig, seed: Optional[int] = None) -> Tuple[ArrivalStream, List[float]]:
    return gen_synthetic(
        config.horizon,
        config.seed if seed is None else seed,
        n_classifiers=config.n_classifiers,
        competences=config.competences,
        rate=config.arrival_rate,
        weight_support=config.weight_support,
        shuffle=config.shuffle_competences,
        arrival_cap=config.arrival_cap,
    )
