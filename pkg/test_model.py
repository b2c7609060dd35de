"""Tests for the core model types and config files."""

from pathlib import Path

import pytest

from src.simulation.errors import ConfigError, DomainError, LedgerError
from src.simulation.model import (
    Competence,
    ResourceBlock,
    SimConfig,
    classifier_order,
    default_competences,
    load_config,
    make_ledger,
    save_config,
    used_classifiers,
)

CONFIG_DIR = Path(__file__).parent / "config"


class TestCompetence:
    def test_accepts_interior_value(self):
        assert float(Competence(0.9)) == 0.9

    @pytest.mark.parametrize("p", [0.5, 0.3, 0.95, 0.99, 1.0])
    def test_rejects_outside_open_interval(self, p):
        with pytest.raises(DomainError):
            Competence(p)

    def test_rho_floor_is_configurable(self):
        assert float(Competence(0.97, rho=0.01)) == 0.97


def test_classifier_order_breaks_ties_by_id():
    assert classifier_order([0.7, 0.9, 0.7, 0.8]) == [1, 3, 0, 2]


def test_default_profile_endpoints():
    ps = default_competences(30)
    assert ps[0] == pytest.approx(0.895)
    assert ps[-1] == pytest.approx(0.75)
    assert all(a > b for a, b in zip(ps, ps[1:]))


class TestSample:
    def test_labels_are_read_only(self, sample_factory):
        sample = sample_factory(n_classifiers=3)
        with pytest.raises(ValueError):
            sample.drawn_labels[0] = -1

    def test_partial_labels_limit_eligibility(self, sample_factory):
        sample = sample_factory(labels=[1, 0, -1, 0])
        assert sample.eligible == frozenset({0, 2})
        assert sample.label_of(2) == -1
        with pytest.raises(LedgerError):
            sample.label_of(1)

    def test_rejects_bad_truth(self, sample_factory):
        with pytest.raises(ValueError):
            sample_factory(truth=0, labels=[1, 1])


class TestLedger:
    def test_add_and_query(self, sample_factory):
        ledger = make_ledger(2, 3)
        s = sample_factory()
        ledger.add(s, 1, 1)
        ledger.add(s, 0, 2)
        assert ledger.blocks_of(s.id) == [ResourceBlock(1, 1), ResourceBlock(0, 2)]
        assert used_classifiers(ledger, s.id) == {0, 1}
        assert ledger.latest_slot(s.id) == 2

    def test_used_classifiers_as_of_slot(self, sample_factory):
        ledger = make_ledger(3, 6)
        s = sample_factory(n_classifiers=3)
        ledger.add(s, 2, 3)
        ledger.add(s, 0, 5)
        assert used_classifiers(ledger, s.id, 4) == {2}
        assert used_classifiers(ledger, s.id, 2) == set()
        assert used_classifiers(ledger, s.id, 5) == {0, 2}
        assert used_classifiers(ledger, s.id) == {0, 2}

    def test_block_capacity_is_one_sample(self, sample_factory):
        ledger = make_ledger(2, 3)
        ledger.add(sample_factory(sid=0), 0, 1)
        with pytest.raises(LedgerError):
            ledger.add(sample_factory(sid=1), 0, 1)

    def test_classifier_used_once_per_sample(self, sample_factory):
        ledger = make_ledger(2, 3)
        s = sample_factory()
        ledger.add(s, 0, 1)
        with pytest.raises(LedgerError):
            ledger.add(s, 0, 2)

    def test_no_block_before_arrival(self, sample_factory):
        ledger = make_ledger(2, 3)
        with pytest.raises(LedgerError):
            ledger.add(sample_factory(slot=2), 0, 1)

    def test_ineligible_classifier_rejected(self, sample_factory):
        ledger = make_ledger(2, 3)
        with pytest.raises(LedgerError):
            ledger.add(sample_factory(labels=[1, 0]), 1, 1)

    def test_exit_closes_sample(self, sample_factory):
        ledger = make_ledger(2, 3)
        s = sample_factory()
        ledger.add(s, 0, 2)
        with pytest.raises(LedgerError):
            ledger.record_exit(s.id, 1)
        ledger.record_exit(s.id, 2)
        with pytest.raises(LedgerError):
            ledger.add(s, 1, 3)

    def test_slot_outside_horizon(self, sample_factory):
        ledger = make_ledger(2, 3)
        with pytest.raises(LedgerError):
            ledger.add(sample_factory(), 0, 4)


class TestSimConfig:
    def test_competence_count_must_match(self):
        with pytest.raises(ValueError):
            SimConfig(n_classifiers=3, competences=[0.9, 0.8])

    def test_learning_len_below_horizon(self):
        with pytest.raises(ValueError):
            SimConfig(horizon=10, learning_len=10)

    def test_resolved_competences_default_profile(self):
        assert SimConfig(n_classifiers=4).resolved_competences() == default_competences(4)

    def test_mean_weight(self):
        assert SimConfig().mean_weight == pytest.approx(6.5)


class TestConfigFiles:
    def test_save_then_load(self, tmp_path):
        config = SimConfig(
            horizon=50,
            n_classifiers=3,
            competences=[0.9, 0.8, 0.7],
            clubbing={1: 1, 2: 1, 3: 2},
            shuffle_competences=True,
        )
        path = save_config(config, tmp_path / "run.cfg")
        assert load_config(path) == config

    def test_aliases_and_overrides(self, tmp_path):
        path = tmp_path / "short.cfg"
        path.write_text("T=20\nM=2\nCOMPETENCES=0.9,0.8\nc=2\n", encoding="utf-8")
        config = load_config(path, seed=9)
        assert (config.horizon, config.n_classifiers, config.cost_c, config.seed) == (20, 2, 2.0, 9)

    def test_unknown_key(self, tmp_path):
        path = tmp_path / "bad.cfg"
        path.write_text("HORIZON=10\nFOO=1\n", encoding="utf-8")
        with pytest.raises(ConfigError, match="FOO"):
            load_config(path)

    def test_invalid_value_is_config_error(self, tmp_path):
        path = tmp_path / "bad.cfg"
        path.write_text("HORIZON=0\n", encoding="utf-8")
        with pytest.raises(ConfigError):
            load_config(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "nope.cfg")

    def test_shipped_configs_load(self):
        for name in ("synthetic", "bird", "dog"):
            load_config(CONFIG_DIR / f"{name}.cfg")
        assert load_config(CONFIG_DIR / "dog.cfg").clubbing == {1: 1, 2: 1, 3: 2, 4: 2}
