"""
Scheduling Model
================
Core value types for the crowdsourcing scheduler:
- Competence: one-coin accuracy of a classifier, strictly inside (1/2, 1 - rho)
- Sample: arriving item with weight, hidden truth and pre-drawn labels
- ResourceBlock: one (classifier, slot) unit of labelling capacity
- AssignmentLedger: the capacity-checked record of who labelled what, when
- SimConfig: validated run configuration, stored as flat key=value files

Classifier ids are 0-based, slots are 1-based.
"""

from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Dict, FrozenSet, Iterable, List, NamedTuple, Optional, Sequence, Set, Tuple, Union

import numpy as np
from dotenv import dotenv_values, set_key
from pydantic import BaseModel, Field, ValidationError, model_validator

from src.simulation.errors import ConfigError, DomainError, LedgerError

DEFAULT_RHO = 0.05


@dataclass(frozen=True)
class Competence:
    """Probability that a classifier's label matches the truth."""

    value: float
    rho: float = DEFAULT_RHO

    def __post_init__(self):
        if not (0.5 < self.value < 1.0 - self.rho):
            raise DomainError(
                f"Competence {self.value} outside (0.5, {1.0 - self.rho:.4f})"
            )

    def __float__(self) -> float:
        return float(self.value)


def competence_values(competences: Iterable[Union[float, Competence]]) -> List[float]:
    return [float(p) for p in competences]


def classifier_order(competences: Sequence[Union[float, Competence]]) -> List[int]:
    """Classifier ids by decreasing competence, lower id first on ties."""
    values = competence_values(competences)
    return sorted(range(len(values)), key=lambda m: (-values[m], m))


@dataclass(frozen=True, eq=False)
class Sample:
    """
    One arriving item.

    drawn_labels holds one entry per classifier: +1/-1 for the label that
    classifier would produce, 0 when the classifier never labels this item
    (replayed datasets). The array is read-only.
    """

    id: int
    arrival_slot: int
    weight: float
    true_label: int
    drawn_labels: np.ndarray

    def __post_init__(self):
        if self.arrival_slot < 1:
            raise ValueError(f"Sample {self.id}: arrival_slot must be >= 1")
        if self.weight <= 0:
            raise ValueError(f"Sample {self.id}: weight must be positive")
        if self.true_label not in (1, -1):
            raise ValueError(f"Sample {self.id}: true_label must be +1 or -1")

        labels = np.array(self.drawn_labels, dtype=np.int8)
        if labels.ndim != 1 or not np.isin(labels, (-1, 0, 1)).all():
            raise ValueError(f"Sample {self.id}: drawn_labels must be a vector over {{-1, 0, +1}}")
        labels.setflags(write=False)
        object.__setattr__(self, "drawn_labels", labels)

    @property
    def n_classifiers(self) -> int:
        return len(self.drawn_labels)

    @cached_property
    def eligible(self) -> FrozenSet[int]:
        """Classifiers that hold a label for this sample."""
        return frozenset(int(m) for m in np.flatnonzero(self.drawn_labels))

    def label_of(self, classifier: int) -> int:
        label = int(self.drawn_labels[classifier])
        if label == 0:
            raise LedgerError(f"Classifier {classifier} has no label for sample {self.id}")
        return label

    def __repr__(self) -> str:
        return (
            f"Sample(id={self.id}, arrival_slot={self.arrival_slot}, "
            f"weight={self.weight}, eligible={len(self.eligible)})"
        )


class ResourceBlock(NamedTuple):
    classifier: int
    slot: int


@dataclass
class AssignmentLedger:
    """
    Record of (sample, classifier, slot) assignments plus per-sample exits.

    Every insert is checked: one sample per block, each classifier at most
    once per sample, no block before arrival or after exit, and only
    classifiers eligible for the sample.
    """

    n_classifiers: int
    horizon: int
    entries: List[Tuple[int, int, int]] = field(default_factory=list)
    exits: Dict[int, int] = field(default_factory=dict)

    _occupied: Dict[Tuple[int, int], int] = field(default_factory=dict, repr=False, compare=False)
    _by_sample: Dict[int, List[ResourceBlock]] = field(default_factory=dict, repr=False, compare=False)

    def add(self, sample: Sample, classifier: int, slot: int) -> ResourceBlock:
        if not 0 <= classifier < self.n_classifiers:
            raise LedgerError(f"Unknown classifier {classifier}")
        if not 1 <= slot <= self.horizon:
            raise LedgerError(f"Slot {slot} outside [1, {self.horizon}]")
        if slot < sample.arrival_slot:
            raise LedgerError(
                f"Sample {sample.id} arrives at {sample.arrival_slot}, cannot use slot {slot}"
            )
        if sample.id in self.exits:
            raise LedgerError(f"Sample {sample.id} already exited at {self.exits[sample.id]}")
        if classifier not in sample.eligible:
            raise LedgerError(f"Classifier {classifier} not eligible for sample {sample.id}")

        holder = self._occupied.get((classifier, slot))
        if holder is not None:
            raise LedgerError(
                f"Block (classifier={classifier}, slot={slot}) already held by sample {holder}"
            )

        blocks = self._by_sample.setdefault(sample.id, [])
        if any(b.classifier == classifier for b in blocks):
            raise LedgerError(f"Classifier {classifier} already labelled sample {sample.id}")

        block = ResourceBlock(classifier, slot)
        blocks.append(block)
        self._occupied[(classifier, slot)] = sample.id
        self.entries.append((sample.id, classifier, slot))
        return block

    def record_exit(self, sample_id: int, slot: int) -> None:
        if sample_id in self.exits:
            raise LedgerError(f"Sample {sample_id} already exited")
        latest = self.latest_slot(sample_id)
        if latest is not None and slot < latest:
            raise LedgerError(f"Sample {sample_id} cannot exit at {slot} before its block at {latest}")
        self.exits[sample_id] = slot

    def blocks_of(self, sample_id: int) -> List[ResourceBlock]:
        return list(self._by_sample.get(sample_id, []))

    def used_classifiers(self, sample_id: int, upto_slot: Optional[int] = None) -> Set[int]:
        """Classifiers that labelled the sample in slots <= ``upto_slot`` (all slots if None)."""
        return {
            b.classifier
            for b in self._by_sample.get(sample_id, [])
            if upto_slot is None or b.slot <= upto_slot
        }

    def latest_slot(self, sample_id: int) -> Optional[int]:
        blocks = self._by_sample.get(sample_id)
        return max(b.slot for b in blocks) if blocks else None

    def sample_ids(self) -> List[int]:
        return sorted(set(self._by_sample) | set(self.exits))

    def same_assignments(self, other: "AssignmentLedger") -> bool:
        """Order-insensitive comparison of entries and exits."""
        return sorted(self.entries) == sorted(other.entries) and self.exits == other.exits

    def __len__(self) -> int:
        return len(self.entries)


def make_ledger(n_classifiers: int, horizon: int) -> AssignmentLedger:
    if n_classifiers < 1 or horizon < 1:
        raise LedgerError("Ledger needs at least one classifier and one slot")
    return AssignmentLedger(n_classifiers=n_classifiers, horizon=horizon)


def used_classifiers(
    ledger: AssignmentLedger, sample_id: int, upto_slot: Optional[int] = None
) -> Set[int]:
    return ledger.used_classifiers(sample_id, upto_slot)


# ============================================================================
# Configuration
# ============================================================================

LIST_KEYS = {"competences", "weight_support"}
KEY_ALIASES = {"t": "horizon", "t_l": "learning_len", "m": "n_classifiers", "c": "cost_c", "eta": "arrival_cap"}


def default_competences(n_classifiers: int) -> List[float]:
    """Linear profile p_m = 0.9 - 0.005 m for m = 1..M."""
    return [round(0.9 - 0.005 * m, 10) for m in range(1, n_classifiers + 1)]


class SimConfig(BaseModel):
    """Validated simulation configuration."""

    horizon: int = Field(1000, ge=1)
    learning_len: Optional[int] = Field(None, ge=1)
    n_classifiers: int = Field(30, ge=1)
    competences: Optional[List[float]] = None
    cost_c: float = Field(1.0, gt=0)
    weight_support: List[int] = Field(default_factory=lambda: list(range(3, 11)))
    arrival_rate: float = Field(5.0, gt=0)
    arrival_cap: Optional[int] = Field(None, ge=1)
    rho_floor: float = Field(DEFAULT_RHO, gt=0, lt=0.5)
    seed: int = 0
    shuffle_competences: bool = False

    dataset_path: Optional[str] = None
    gold_path: Optional[str] = None
    clubbing: Optional[Dict[int, int]] = None
    max_workers_in_dataset: Optional[int] = Field(None, ge=1)

    n_classes: int = Field(2, ge=2)
    learn_max_iters: int = Field(100, ge=0)
    learn_tol: float = Field(1e-8, gt=0)
    literal_flip: bool = False

    @model_validator(mode="after")
    def _check_consistency(self):
        if not self.weight_support or min(self.weight_support) <= 0:
            raise ValueError("weight_support must hold positive weights")
        if self.competences is not None:
            if len(self.competences) != self.n_classifiers:
                raise ValueError(
                    f"{len(self.competences)} competences for {self.n_classifiers} classifiers"
                )
            for p in self.competences:
                Competence(p, self.rho_floor)
        if self.learning_len is not None and self.learning_len >= self.horizon:
            raise ValueError(f"learning_len {self.learning_len} must be below horizon {self.horizon}")
        return self

    def resolved_competences(self) -> List[float]:
        if self.competences is not None:
            return list(self.competences)
        return default_competences(self.n_classifiers)

    @property
    def mean_weight(self) -> float:
        return float(np.mean(self.weight_support))


def _parse_value(key: str, raw: str):
    raw = raw.strip()
    if raw == "":
        return None
    if key in LIST_KEYS:
        return [item.strip() for item in raw.split(",") if item.strip()]
    if key == "clubbing":
        mapping = {}
        for pair in raw.split(","):
            src, _, dst = pair.partition(":")
            if not dst:
                raise ConfigError(f"clubbing entry {pair!r} is not 'from:to'")
            mapping[int(src)] = int(dst)
        return mapping
    return raw


def load_config(path: Union[str, Path], **overrides) -> SimConfig:
    """Read a flat key=value config file; keyword overrides win."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"Config file not found: {path}")

    values = {}
    for raw_key, raw_value in dotenv_values(path).items():
        key = KEY_ALIASES.get(raw_key.lower(), raw_key.lower())
        if key not in SimConfig.model_fields:
            raise ConfigError(f"{path}: unknown key {raw_key!r}")
        value = _parse_value(key, raw_value or "")
        if value is not None:
            values[key] = value

    values.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return SimConfig(**values)
    except ValidationError as e:
        raise ConfigError(f"{path}: {e}") from e


def save_config(config: SimConfig, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("", encoding="utf-8")

    for key, value in config.model_dump().items():
        if value is None:
            continue
        if key in LIST_KEYS:
            text = ",".join(str(v) for v in value)
        elif key == "clubbing":
            text = ",".join(f"{k}:{v}" for k, v in sorted(value.items()))
        else:
            text = str(value)
        set_key(str(path), key.upper(), text, quote_mode="never")
    return path
