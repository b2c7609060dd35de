"""
Crowdsourcing Dataset Ingestion
===============================
Loads `item worker class` triple files (e.g. the Bird and DOG
crowdsourcing datasets) and replays them as arrival streams.

Features:
- Dense remapping of item and worker ids (first-appearance order)
- Class clubbing (e.g. DOG: 1,2 -> 1 and 3,4 -> 2)
- Top-N worker selection by label count, ties by id
- Optional gold labels for diagnostics
- Replay: Poisson arrivals of items drawn with replacement
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from loguru import logger

from src.data_collection.synthetic import ArrivalStream
from src.learning.online_learn import LabelMatrix, online_learn
from src.simulation.errors import DatasetError, DatasetParseError
from src.simulation.model import Sample
from src.simulation.utility import weighted_majority

PathLike = Union[str, Path]


@dataclass
class DatasetTable:
    """Dense-indexed label triples of one dataset."""

    items: List[str]
    workers: List[str]
    triples: np.ndarray  # (n_labels, 3): item index, worker index, class id
    k_classes: int
    gold: Optional[Dict[int, int]] = None
    source: Optional[str] = None

    @property
    def n_items(self) -> int:
        return len(self.items)

    @property
    def n_workers(self) -> int:
        return len(self.workers)

    @property
    def n_labels(self) -> int:
        return len(self.triples)

    def label_matrix(self) -> LabelMatrix:
        labels = np.zeros((self.n_items, self.n_workers), dtype=np.int16)
        labels[self.triples[:, 0], self.triples[:, 1]] = self.triples[:, 2]
        return LabelMatrix(labels, n_classes=self.k_classes, sample_ids=list(range(self.n_items)))

    def signed_matrix(self) -> np.ndarray:
        """+1 for class 1, -1 for class 2, 0 for missing (binary tables only)."""
        if self.k_classes != 2:
            raise DatasetError(f"Replay needs a binary table, this one has {self.k_classes} classes")
        labels = self.label_matrix().labels
        return np.where(labels == 1, 1, np.where(labels == 2, -1, 0)).astype(np.int8)

    def item_map(self) -> pd.DataFrame:
        return pd.DataFrame({"item_index": range(self.n_items), "item_id": self.items})

    def worker_map(self) -> pd.DataFrame:
        return pd.DataFrame({"worker_index": range(self.n_workers), "worker_id": self.workers})

    def summary(self) -> str:
        return f"{self.n_items} items, {self.n_workers} workers, {self.n_labels} labels, K={self.k_classes}"


def _read_rows(path: Path, width: int) -> List[Tuple[int, List[str]]]:
    rows = []
    with open(path, "r", encoding="utf-8") as f:
        for line_no, raw in enumerate(f, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != width:
                raise DatasetParseError(path, line_no, line, f"expected {width} fields")
            try:
                int(parts[-1])
            except ValueError:
                raise DatasetParseError(path, line_no, line, "class id is not an integer")
            rows.append((line_no, parts))
    return rows


def _club(cls: int, clubbing: Optional[Dict[int, int]], path: Path, line_no: int) -> int:
    if clubbing is None:
        return cls
    if cls not in clubbing:
        raise DatasetError(f"{path}:{line_no}: class {cls} not in clubbing map {sorted(clubbing)}")
    return clubbing[cls]


def load_dataset(
    path: PathLike,
    clubbing: Optional[Dict[int, int]] = None,
    max_workers: Optional[int] = None,
    gold_path: Optional[PathLike] = None,
) -> DatasetTable:
    """
    Parse a triple file into a DatasetTable.

    Args:
        clubbing: class merge map applied to every label (and gold label)
        max_workers: keep only the workers with the most labels, ties by worker id;
            items left without labels are dropped
        gold_path: optional `item class` file with true classes
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Dataset not found: {path}")

    rows = _read_rows(path, 3)
    if not rows:
        raise DatasetError(f"{path}: no labels")

    item_ids: Dict[str, int] = {}
    worker_ids: Dict[str, int] = {}
    seen = set()
    triples = []
    duplicates = 0

    for line_no, (item, worker, raw_cls) in rows:
        cls = _club(int(raw_cls), clubbing, path, line_no)
        if cls < 1:
            raise DatasetError(f"{path}:{line_no}: class ids start at 1, got {cls}")
        i = item_ids.setdefault(item, len(item_ids))
        w = worker_ids.setdefault(worker, len(worker_ids))
        if (i, w) in seen:
            duplicates += 1
            continue
        seen.add((i, w))
        triples.append((i, w, cls))

    if duplicates:
        logger.warning(f"{path}: ignored {duplicates} repeated (item, worker) labels")

    triples = np.asarray(triples, dtype=np.int64)
    k_classes = max(clubbing.values()) if clubbing else int(triples[:, 2].max())
    items = list(item_ids)
    workers = list(worker_ids)

    if max_workers is not None and max_workers < len(workers):
        triples, items, workers = _select_workers(triples, items, workers, max_workers)

    gold = _load_gold(Path(gold_path), items, clubbing) if gold_path else None
    table = DatasetTable(items, workers, triples, k_classes, gold=gold, source=str(path))
    logger.info(f"Loaded {path.name}: {table.summary()}")
    return table


def _select_workers(triples: np.ndarray, items: List[str], workers: List[str], keep: int):
    counts = np.bincount(triples[:, 1], minlength=len(workers))
    ranked = sorted(range(len(workers)), key=lambda w: (-counts[w], workers[w]))
    kept_workers = sorted(ranked[:keep])

    worker_index = {w: n for n, w in enumerate(kept_workers)}
    triples = triples[np.isin(triples[:, 1], kept_workers)]

    kept_items = sorted(set(triples[:, 0].tolist()))
    item_index = {i: n for n, i in enumerate(kept_items)}

    remapped = np.column_stack(
        [
            [item_index[i] for i in triples[:, 0]],
            [worker_index[w] for w in triples[:, 1]],
            triples[:, 2],
        ]
    ).astype(np.int64)
    logger.info(f"Selected {keep} of {len(workers)} workers, {len(kept_items)} items keep labels")
    return remapped, [items[i] for i in kept_items], [workers[w] for w in kept_workers]


def _load_gold(path: Path, items: Sequence[str], clubbing: Optional[Dict[int, int]]) -> Dict[int, int]:
    index = {item: n for n, item in enumerate(items)}
    gold = {}
    for line_no, (item, raw_cls) in _read_rows(path, 2):
        if item in index:
            gold[index[item]] = _club(int(raw_cls), clubbing, path, line_no)
    logger.info(f"Gold labels for {len(gold)} of {len(items)} items")
    return gold


def write_remap_tables(table: DatasetTable, out_dir: PathLike) -> Tuple[Path, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    item_path = out_dir / "item_map.csv"
    worker_path = out_dir / "worker_map.csv"
    table.item_map().to_csv(item_path, index=False)
    table.worker_map().to_csv(worker_path, index=False)
    return item_path, worker_path


def genie_competences(table: DatasetTable) -> List[float]:
    """Competences learned from the whole table, used as the genie for replay."""
    return online_learn(table.label_matrix(), strict=False).p_hat


def replay_stream(
    table: DatasetTable,
    T: int,
    seed: int,
    rate: float = 5.0,
    weight_support: Optional[Sequence[int]] = None,
    genie: Optional[Sequence[float]] = None,
    arrival_cap: Optional[int] = None,
) -> Tuple[ArrivalStream, List[float]]:
    """
    Replay a binary table as T slots of Poisson(rate) arrivals.

    Each arrival is a fresh sample instance of a uniformly drawn item
    (with replacement) carrying that item's dataset labels; only workers
    that labelled the item are eligible. True labels come from gold when
    available, else from the weighted majority under the genie competences.
    """
    signed = table.signed_matrix()
    genie = list(genie) if genie is not None else genie_competences(table)
    support = np.asarray(list(weight_support) if weight_support is not None else range(3, 11))
    gold = table.gold or {}

    item_truth = []
    for i in range(table.n_items):
        if i in gold:
            item_truth.append(1 if gold[i] == 1 else -1)
        else:
            row = signed[i]
            item_truth.append(weighted_majority({int(m): int(row[m]) for m in np.flatnonzero(row)}, genie))

    rng = np.random.default_rng(seed)
    counts = rng.poisson(rate, size=T)
    if arrival_cap is not None:
        counts = np.minimum(counts, arrival_cap)
    n = int(counts.sum())
    drawn_items = rng.integers(table.n_items, size=n)
    weights = rng.choice(support, size=n)

    per_slot: List[List[Sample]] = []
    sid = 0
    for t, count in enumerate(counts, start=1):
        batch = []
        for _ in range(int(count)):
            item = int(drawn_items[sid])
            batch.append(Sample(sid, t, float(weights[sid]), item_truth[item], signed[item]))
            sid += 1
        per_slot.append(batch)

    if len(gold) == table.n_items:
        source = "gold"
    elif gold:
        source = "mixed"
    else:
        source = "weighted_majority"
    return ArrivalStream(per_slot, seed=seed, label_source=source), genie
