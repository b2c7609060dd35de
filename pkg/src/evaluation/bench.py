"""
Genie vs Two-Phase Benchmark
============================
Runs the known-competence greedy ("genie") and the learn-then-match
scheduler on identical arrival streams and reports utility, regret and
competitive ratio.

Features:
- run_pair: one (T, T_L, seed) cell
- sweep_tl: learning-length sweep at fixed T, best T_L by mean utility
- sweep_horizon: best-T_L regret and ratio across horizons
- Parallel cells with ProcessPoolExecutor, results ordered before writing
"""

import hashlib
import math
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import asdict, dataclass
from functools import lru_cache
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import pandas as pd
from loguru import logger
from tqdm import tqdm

from src.data_collection.datasets import genie_competences, load_dataset, replay_stream
from src.data_collection.synthetic import ArrivalStream, gen_from_config
from src.simulation.greedy import run_genie
from src.simulation.model import SimConfig
from src.simulation.scheduler import Learner, PhasePlan, run_two_phase
from src.simulation.utility import decision_accuracy

FLOAT_FORMAT = "%.12g"


@dataclass
class ExperimentResult:
    T: int
    T_L: int
    replicate: int
    seed: int
    utility_genie: float
    utility_learned: float
    regret: float
    regret_normalized: float
    ratio: float
    learn_error_inf: float
    decision_accuracy_genie: float
    decision_accuracy_learned: float
    label_source: str
    n_samples: int
    realized_mean_arrivals: float
    realized_mean_weight: float
    max_arrivals: int
    em_iterations: int
    stream_digest: str
    wall_time: float = 0.0

    def as_row(self, include_timing: bool = False) -> dict:
        row = asdict(self)
        if not include_timing:
            row.pop("wall_time")
        return row


def cell_seed(base: int, *key: int) -> int:
    """Stable 63-bit seed for a (T, T_L, replicate) cell."""
    digest = hashlib.blake2b(repr((base,) + tuple(key)).encode(), digest_size=8).digest()
    return int.from_bytes(digest, "big") >> 1


@lru_cache(maxsize=4)
def _dataset(path: str, clubbing: Optional[Tuple[Tuple[int, int], ...]], max_workers: Optional[int], gold: Optional[str]):
    table = load_dataset(path, dict(clubbing) if clubbing else None, max_workers, gold)
    return table, genie_competences(table)


def build_stream(config: SimConfig, seed: int) -> Tuple[ArrivalStream, List[float]]:
    """Synthetic stream, or a replay of ``config.dataset_path`` when set."""
    if config.dataset_path is None:
        return gen_from_config(config, seed)

    clubbing = tuple(sorted(config.clubbing.items())) if config.clubbing else None
    table, genie = _dataset(config.dataset_path, clubbing, config.max_workers_in_dataset, config.gold_path)
    return replay_stream(
        table,
        config.horizon,
        seed,
        rate=config.arrival_rate,
        weight_support=config.weight_support,
        genie=genie,
        arrival_cap=config.arrival_cap,
    )


def run_pair(
    config: SimConfig,
    plan: PhasePlan,
    seed: int,
    replicate: int = 0,
    learner: Optional[Learner] = None,
    stream: Optional[ArrivalStream] = None,
    competences: Optional[Sequence[float]] = None,
    trace_path: Optional[Union[str, Path]] = None,
) -> ExperimentResult:
    """
    Genie and two-phase runs on one stream.

    ``learner`` replaces the online learner (e.g. a perfect learner).
    ``stream``/``competences`` skip stream generation.
    ``trace_path`` receives the genie run's per-event trace CSV.
    """
    start = time.time()
    config = config.model_copy(update={"horizon": plan.horizon, "learning_len": plan.t_learn})
    if stream is None:
        stream, competences = build_stream(config, seed)
    elif competences is None:
        raise ValueError("An explicit stream needs its competences")
    competences = list(competences)

    digest = stream.digest()
    genie_ledger, utility_genie = run_genie(config, stream, competences, trace_path=trace_path)
    learning_seed = cell_seed(seed, 0x5EED)
    ledger, utility_learned, learned = run_two_phase(
        config, stream, competences, plan, seed=learning_seed, learner=learner
    )
    if stream.digest() != digest:
        raise RuntimeError("Arrival stream changed between the genie and two-phase runs")

    regret = utility_genie - utility_learned
    normalizer = config.arrival_rate * config.mean_weight
    samples = stream.by_id

    result = ExperimentResult(
        T=plan.horizon,
        T_L=plan.t_learn,
        replicate=replicate,
        seed=seed,
        utility_genie=utility_genie,
        utility_learned=utility_learned,
        regret=regret,
        regret_normalized=regret / normalizer,
        ratio=utility_learned / utility_genie if utility_genie > 0 else float("nan"),
        learn_error_inf=learned.max_error(competences),
        decision_accuracy_genie=decision_accuracy(genie_ledger, samples, competences),
        decision_accuracy_learned=decision_accuracy(ledger, samples, learned.p_hat),
        label_source=stream.label_source,
        n_samples=stream.n_samples,
        realized_mean_arrivals=stream.realized_mean_arrivals,
        realized_mean_weight=stream.realized_mean_weight,
        max_arrivals=stream.max_arrivals,
        em_iterations=learned.iterations_run,
        stream_digest=digest,
    )
    result.wall_time = time.time() - start
    return result


def _run_cell(config: SimConfig, T: int, T_L: int, replicate: int) -> ExperimentResult:
    seed = cell_seed(config.seed, T, T_L, replicate)
    return run_pair(config, PhasePlan(T_L, T), seed, replicate=replicate)


def _replicates(seeds: Union[int, Sequence[int]]) -> List[int]:
    return list(range(seeds)) if isinstance(seeds, int) else list(seeds)


def run_cells(
    config: SimConfig,
    cells: Iterable[Tuple[int, int, int]],
    workers: Optional[int] = None,
    progress: bool = True,
) -> List[ExperimentResult]:
    """Run (T, T_L, replicate) cells, in parallel when workers > 1, ordered by key."""
    cells = list(cells)
    results: List[ExperimentResult] = []

    if workers is None or workers <= 1:
        for cell in tqdm(cells, desc="cells", disable=not progress):
            results.append(_run_cell(config, *cell))
    else:
        with ProcessPoolExecutor(max_workers=workers) as executor:
            future_to_cell = {executor.submit(_run_cell, config, *cell): cell for cell in cells}
            for future in tqdm(as_completed(future_to_cell), total=len(cells), desc="cells", disable=not progress):
                cell = future_to_cell[future]
                try:
                    results.append(future.result())
                except Exception as e:
                    logger.error(f"Cell T={cell[0]} T_L={cell[1]} rep={cell[2]} failed: {e}")
                    raise

    results.sort(key=lambda r: (r.T, r.T_L, r.replicate))
    return results


def results_frame(results: Sequence[ExperimentResult], include_timing: bool = False) -> pd.DataFrame:
    return pd.DataFrame([r.as_row(include_timing) for r in results])


def summarize_tl(cells: pd.DataFrame) -> pd.DataFrame:
    grouped = cells.groupby("T_L", sort=True)
    return pd.DataFrame(
        {
            "mean_utility_learned": grouped["utility_learned"].mean(),
            "std_utility_learned": grouped["utility_learned"].std(ddof=0),
            "mean_utility_genie": grouped["utility_genie"].mean(),
            "mean_learn_error_inf": grouped["learn_error_inf"].mean(),
            "median_learn_error_inf": grouped["learn_error_inf"].median(),
            "n": grouped.size(),
        }
    ).reset_index()


def best_tl(summary: pd.DataFrame) -> int:
    """T_L with the highest mean learned utility, smaller T_L on ties."""
    ordered = summary.sort_values("T_L")
    return int(ordered.loc[ordered["mean_utility_learned"].idxmax(), "T_L"])


def _check_grid(T: int, tl_grid: Sequence[int]) -> List[int]:
    grid = sorted(set(int(t) for t in tl_grid))
    bad = [t for t in grid if not 1 <= t < T]
    if bad:
        raise ValueError(f"T_L values {bad} outside [1, {T})")
    return grid


def sweep_tl(
    config: SimConfig,
    T: int,
    tl_grid: Sequence[int],
    seeds: Union[int, Sequence[int]] = 5,
    workers: Optional[int] = None,
    progress: bool = True,
) -> Tuple[pd.DataFrame, pd.DataFrame, int]:
    """
    Returns:
        (per-T_L summary, per-cell results, best T_L)
    """
    grid = _check_grid(T, tl_grid)
    cells = [(T, t_l, rep) for t_l in grid for rep in _replicates(seeds)]
    frame = results_frame(run_cells(config, cells, workers, progress), include_timing=True)
    summary = summarize_tl(frame)
    best = best_tl(summary)
    logger.info(f"T={T}: best T_L={best} over {len(grid)} learning lengths")
    return summary, frame, best


def sweep_horizon(
    config: SimConfig,
    t_grid: Sequence[int],
    tl_grid: Sequence[int],
    seeds: Union[int, Sequence[int]] = 5,
    workers: Optional[int] = None,
    progress: bool = True,
) -> Tuple[pd.DataFrame, pd.DataFrame]:
    """
    Regret and ratio at the best T_L of every horizon.

    T_L values at or beyond a horizon are skipped for that horizon.

    Returns:
        (per-T rows, per-cell results)
    """
    cells = []
    for T in sorted(set(t_grid)):
        grid = [t for t in sorted(set(tl_grid)) if 1 <= t < T]
        if not grid:
            raise ValueError(f"No T_L in the grid fits below T={T}")
        cells.extend((T, t_l, rep) for t_l in grid for rep in _replicates(seeds))

    frame = results_frame(run_cells(config, cells, workers, progress), include_timing=True)
    rows = []
    for T, per_t in frame.groupby("T", sort=True):
        best = best_tl(summarize_tl(per_t))
        at_best = per_t[per_t["T_L"] == best]
        rows.append(
            {
                "T": int(T),
                "best_TL": best,
                "utility_genie": at_best["utility_genie"].mean(),
                "utility_learned": at_best["utility_learned"].mean(),
                "regret": at_best["regret"].mean(),
                "regret_normalized": at_best["regret_normalized"].mean(),
                "ratio": at_best["ratio"].mean(),
                "median_regret_normalized": at_best["regret_normalized"].median(),
                "median_ratio": at_best["ratio"].median(),
                "regret_over_log_T": at_best["regret_normalized"].median() / math.log(T),
                "ratio_floor": 0.5 - math.log(T) / T,
            }
        )
    return pd.DataFrame(rows), frame


def write_csv(frame: pd.DataFrame, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)
    return path


def write_cells(frame: pd.DataFrame, out_dir: Union[str, Path], name: str) -> Tuple[Path, Path]:
    """Deterministic results CSV plus a separate timings CSV."""
    out_dir = Path(out_dir)
    timings = frame[["T", "T_L", "replicate", "wall_time"]]
    results = write_csv(frame.drop(columns=["wall_time"]), out_dir / f"{name}.csv")
    return results, write_csv(timings, out_dir / f"{name}_timings.csv")
