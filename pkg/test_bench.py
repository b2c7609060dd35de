"""Tests for the genie vs two-phase benchmark harness."""

import math

import numpy as np
import pandas as pd
import pytest

from src.data_collection.synthetic import ArrivalStream
from src.evaluation.bench import (
    best_tl,
    build_stream,
    cell_seed,
    run_cells,
    run_pair,
    sweep_horizon,
    sweep_tl,
    write_cells,
)
from src.learning.online_learn import LearnedCompetences
from src.simulation.model import SimConfig, Sample
from src.simulation.scheduler import PhasePlan
from src.simulation.utility import accuracy, err_single

PS = [0.9, 0.85, 0.8, 0.75]


@pytest.fixture
def config():
    return SimConfig(horizon=60, n_classifiers=len(PS), competences=PS, seed=3)


def test_cell_seed_is_stable_and_distinct():
    assert cell_seed(0, 100, 5, 1) == cell_seed(0, 100, 5, 1)
    assert cell_seed(0, 100, 5, 1) != cell_seed(0, 100, 1, 5)
    assert cell_seed(0, 100, 5, 1) != cell_seed(1, 100, 5, 1)
    assert 0 <= cell_seed(123, 4) < 2**63


class TestRunPair:
    def test_result_fields(self, config):
        result = run_pair(config, PhasePlan(10, 60), seed=1)
        assert result.T == 60 and result.T_L == 10
        assert result.regret == pytest.approx(result.utility_genie - result.utility_learned)
        # configured means: 5 arrivals per slot, mean weight 6.5
        assert result.regret_normalized == pytest.approx(result.regret / 32.5)
        assert result.ratio == pytest.approx(result.utility_learned / result.utility_genie)
        assert result.label_source == "truth"
        assert 0 <= result.learn_error_inf < 0.5
        assert len(result.stream_digest) == 64
        assert result.wall_time >= 0

    def test_reports_peak_arrivals(self, config):
        result = run_pair(config, PhasePlan(10, 60), seed=1)
        stream, _ = build_stream(config.model_copy(update={"learning_len": 10}), 1)
        assert result.max_arrivals == stream.max_arrivals
        assert result.max_arrivals >= result.realized_mean_arrivals
        assert "max_arrivals" in result.as_row()

    def test_genie_trace(self, config, tmp_path):
        path = tmp_path / "genie_trace.csv"
        result = run_pair(config, PhasePlan(10, 60), seed=1, trace_path=path)
        trace = pd.read_csv(path)
        assert (trace["event"] == "exit").sum() == result.n_samples

    def test_same_seed_same_row(self, config):
        first = run_pair(config, PhasePlan(10, 60), seed=2).as_row()
        second = run_pair(config, PhasePlan(10, 60), seed=2).as_row()
        assert first == second
        assert "wall_time" not in first

    def test_genie_learner_ratio_bounded(self, config):
        def genie(data):
            return LearnedCompetences(p_hat=list(PS), iterations_run=0, converged=True)

        result = run_pair(config, PhasePlan(5, 60), seed=4, learner=genie)
        assert result.learn_error_inf == 0.0
        assert 0 < result.ratio <= 1.0

    def test_perfect_learner_regret_is_learning_window(self):
        T, T_L, w = 12, 4, 5.0
        per_slot = [[Sample(t - 1, t, w, 1, np.ones(1, dtype=np.int8))] for t in range(1, T + 1)]
        stream = ArrivalStream(per_slot, seed=0)
        config = SimConfig(horizon=T, n_classifiers=1, competences=[0.9], weight_support=[5])

        def perfect(data):
            return LearnedCompetences(p_hat=[0.9], iterations_run=0, converged=True)

        result = run_pair(config, PhasePlan(T_L, T), seed=0, learner=perfect, stream=stream, competences=[0.9])
        per_sample = w * accuracy(err_single(0.9))
        assert result.utility_genie == pytest.approx(T * per_sample, abs=1e-9)
        assert result.regret == pytest.approx(T_L * per_sample, abs=1e-9)
        assert result.regret_normalized == pytest.approx(result.regret / 25.0)

    def test_stream_without_competences(self, config):
        stream = ArrivalStream([[] for _ in range(60)])
        with pytest.raises(ValueError):
            run_pair(config, PhasePlan(10, 60), seed=0, stream=stream)

    def test_replayed_dataset(self, tmp_path):
        rng = np.random.default_rng(1)
        lines = []
        for item in range(300):
            truth = int(rng.integers(1, 3))
            for worker, p in enumerate(PS):
                cls = truth if rng.random() < p else 3 - truth
                lines.append(f"item{item} worker{worker} {cls}")
        path = tmp_path / "labels.txt"
        path.write_text("\n".join(lines) + "\n")

        config = SimConfig(horizon=40, n_classifiers=len(PS), dataset_path=str(path))
        result = run_pair(config, PhasePlan(10, 40), seed=5)
        assert result.label_source == "weighted_majority"
        assert result.utility_genie > 0


class TestSweeps:
    def test_best_tl_prefers_smaller_on_ties(self):
        summary = pd.DataFrame({"T_L": [10, 5, 20], "mean_utility_learned": [3.0, 3.0, 1.0]})
        assert best_tl(summary) == 5

    def test_single_point_grid(self, config):
        busy = config.model_copy(update={"arrival_rate": 20.0})
        summary, frame, best = sweep_tl(busy, 60, [1], seeds=2, progress=False)
        assert best == 1
        assert len(summary) == 1 and len(frame) == 2

    def test_sweep_tl(self, config):
        summary, frame, best = sweep_tl(config, 60, [25, 5], seeds=2, progress=False)
        assert summary["T_L"].tolist() == [5, 25]
        assert summary["n"].tolist() == [2, 2]
        assert best in (5, 25)
        assert frame[["T_L", "replicate"]].values.tolist() == [[5, 0], [5, 1], [25, 0], [25, 1]]

    def test_sweep_tl_rejects_grid_beyond_horizon(self, config):
        with pytest.raises(ValueError):
            sweep_tl(config, 60, [5, 60], seeds=1, progress=False)

    def test_sweep_horizon_filters_grid(self, config):
        rows, frame = sweep_horizon(config, [20, 40], [5, 30], seeds=2, progress=False)
        assert rows["T"].tolist() == [20, 40]
        assert rows.loc[0, "best_TL"] == 5
        assert len(frame[frame["T"] == 20]) == 2
        assert len(frame[frame["T"] == 40]) == 4
        assert rows.loc[0, "ratio_floor"] == pytest.approx(0.5 - math.log(20) / 20)

    def test_parallel_matches_serial(self, config):
        cells = [(40, 5, 0), (40, 10, 0), (40, 5, 1)]
        serial = run_cells(config, cells, workers=1, progress=False)
        parallel = run_cells(config, cells, workers=2, progress=False)
        assert [r.as_row() for r in serial] == [r.as_row() for r in parallel]
        assert [(r.T_L, r.replicate) for r in serial] == [(5, 0), (5, 1), (10, 0)]

    def test_csv_output_is_deterministic(self, config, tmp_path):
        _, first, _ = sweep_tl(config, 40, [5, 10], seeds=2, progress=False)
        _, second, _ = sweep_tl(config, 40, [5, 10], seeds=2, progress=False)
        a, timings = write_cells(first, tmp_path / "a", "sweep_tl")
        b, _ = write_cells(second, tmp_path / "b", "sweep_tl")
        assert a.read_bytes() == b.read_bytes()
        assert "wall_time" not in pd.read_csv(a).columns
        assert list(pd.read_csv(timings).columns) == ["T", "T_L", "replicate", "wall_time"]


@pytest.mark.slow
def test_learning_error_shrinks_with_longer_learning():
    config = SimConfig(horizon=1300, n_classifiers=30, seed=0)
    _, frame, _ = sweep_tl(config, 1300, [5, 250, 1250], seeds=20, workers=4, progress=False)
    errors = frame.pivot(index="replicate", columns="T_L", values="learn_error_inf")
    assert len(errors) == 20

    assert (errors[1250] <= 0.05).sum() >= 18
    assert (errors[1250] < errors[5]).sum() >= 18
    medians = errors.median()
    assert medians[5] >= medians[250] >= medians[1250]


@pytest.mark.slow
def test_regret_and_ratio_across_horizons():
    config = SimConfig(horizon=10000, n_classifiers=30, seed=0)
    t_grid = [1000, 2000, 5000, 10000]
    tl_grid = [5, 15, 25, 45, 50, 150, 250, 450, 750, 1250]
    rows, _ = sweep_horizon(config, t_grid, tl_grid, seeds=5, workers=4, progress=False)
    rows = rows.set_index("T")

    assert rows.loc[10000, "median_ratio"] >= 0.5 - math.log(10000) / 10000
    per_log_t = rows.loc[t_grid, "regret_over_log_T"].tolist()
    assert all(later <= earlier for earlier, later in zip(per_log_t, per_log_t[1:]))
