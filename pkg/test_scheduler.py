"""Tests for the learn-then-match scheduler."""

import pytest

from src.data_collection.synthetic import gen_synthetic
from src.learning.online_learn import LearnedCompetences
from src.simulation.errors import EstimationError, SchedulingError
from src.simulation.greedy import run_genie
from src.simulation.model import SimConfig, make_ledger
from src.simulation.scheduler import PhasePlan, learning_phase, run_two_phase

PS = [0.9, 0.85, 0.8, 0.75, 0.7]


@pytest.fixture(scope="module")
def stream():
    stream, _ = gen_synthetic(60, seed=21, competences=PS)
    return stream


@pytest.fixture
def config():
    return SimConfig(horizon=60, n_classifiers=len(PS), competences=PS, seed=4)


def perfect_learner(data, **kwargs):
    return LearnedCompetences(p_hat=list(PS), iterations_run=0, converged=True)


class TestPhasePlan:
    @pytest.mark.parametrize("t_learn,horizon", [(0, 10), (10, 10), (11, 10), (-1, 5)])
    def test_rejects_bad_lengths(self, t_learn, horizon):
        with pytest.raises(SchedulingError):
            PhasePlan(t_learn, horizon)

    def test_from_config(self, config):
        plan = PhasePlan.from_config(config.model_copy(update={"learning_len": 12}))
        assert plan == PhasePlan(12, 60)

    def test_from_config_without_learning_len(self, config):
        with pytest.raises(SchedulingError):
            PhasePlan.from_config(config)


class TestLearningPhase:
    def test_one_row_per_busy_slot(self, stream):
        plan = PhasePlan(20, 60)
        data = learning_phase(stream, plan, PS, seed=1)
        busy = sum(1 for t in range(20) if stream[t])
        assert data.n_samples == busy
        assert data.n_classifiers == len(PS)
        chosen = [stream.by_id[sid] for sid in data.sample_ids]
        assert all(s.arrival_slot <= 20 for s in chosen)
        assert len({s.arrival_slot for s in chosen}) == busy

    def test_every_learning_arrival_exits_unassigned(self, stream):
        ledger = make_ledger(len(PS), 60)
        learning_phase(stream, PhasePlan(15, 60), PS, seed=1, ledger=ledger)
        early = [s.id for t in range(15) for s in stream[t]]
        assert ledger.exits == {sid: stream.by_id[sid].arrival_slot for sid in early}
        assert len(ledger) == 0

    def test_same_seed_same_picks(self, stream):
        a = learning_phase(stream, PhasePlan(30, 60), PS, seed=9)
        b = learning_phase(stream, PhasePlan(30, 60), PS, seed=9)
        assert a.sample_ids == b.sample_ids


class TestRunTwoPhase:
    def test_perfect_learner_matches_genie_from_phase_two(self, config, stream):
        plan = PhasePlan(10, 60)
        ledger, utility, learned = run_two_phase(config, stream, PS, plan, seed=3, learner=perfect_learner)
        genie_ledger, genie_utility = run_genie(config, stream, PS, start_slot=11)

        assert sorted(ledger.entries) == sorted(genie_ledger.entries)
        assert utility == pytest.approx(genie_utility, abs=1e-9)
        assert learned.p_hat == PS
        for sid, slot in genie_ledger.exits.items():
            assert ledger.exits[sid] == slot

    def test_patched_learner_is_used(self, config, stream, mocker):
        plan = PhasePlan(10, 60)
        patched = mocker.patch("src.simulation.scheduler.online_learn", side_effect=perfect_learner)
        ledger, utility, _ = run_two_phase(config, stream, PS, plan, seed=3)
        patched.assert_called_once()
        assert patched.call_args.kwargs["K"] == config.n_classes
        _, expected = run_two_phase(config, stream, PS, plan, seed=3, learner=perfect_learner)[:2]
        assert utility == pytest.approx(expected)

    def test_no_block_during_learning(self, config, stream):
        ledger, _, _ = run_two_phase(config, stream, PS, PhasePlan(25, 60), seed=3)
        assert all(slot > 25 for _, _, slot in ledger.entries)
        assert set(ledger.exits) == set(stream.by_id)

    def test_learned_competences_are_clamped(self, config, stream):
        _, _, learned = run_two_phase(config, stream, PS, PhasePlan(40, 60), seed=3)
        assert all(0.5 < p < 1 for p in learned.p_hat)
        assert len(learned.p_hat) == len(PS)

    def test_estimation_failure_is_wrapped(self, config, stream, mocker):
        mocker.patch("src.simulation.scheduler.online_learn", side_effect=EstimationError("no data"))
        with pytest.raises(SchedulingError, match="no data"):
            run_two_phase(config, stream, PS, PhasePlan(10, 60), seed=3)

    def test_horizon_mismatch(self, config, stream):
        with pytest.raises(SchedulingError):
            run_two_phase(config, stream, PS, PhasePlan(10, 50))

    def test_deterministic(self, config, stream):
        first = run_two_phase(config, stream, PS, PhasePlan(20, 60), seed=8)
        second = run_two_phase(config, stream, PS, PhasePlan(20, 60), seed=8)
        assert first[0] == second[0]
        assert first[1] == second[1]
