"""End-to-end tests for the experiments CLI."""

from pathlib import Path

import pandas as pd
import pytest

from run_experiments import main

CONFIG_DIR = Path(__file__).parent / "config"
SYNTHETIC = str(CONFIG_DIR / "synthetic.cfg")


def cli(tmp_path, *args):
    return main(["--out", str(tmp_path), "--log-level", "WARNING", *args])


def write_dense_dataset(path):
    """30 items, 4 workers, every worker labels every item."""
    rows = []
    for item in range(30):
        truth = 1 + item % 2
        for worker in range(4):
            wrong = (item + worker) % 7 == 0
            rows.append(f"i{item} w{worker} {3 - truth if wrong else truth}")
    path.write_text("\n".join(rows) + "\n")
    return path


def test_gen_writes_manifest(tmp_path):
    assert cli(tmp_path, "gen", "--config", SYNTHETIC, "--T", "20", "--seed", "3") == 0
    manifest = pd.read_csv(tmp_path / "stream_manifest.csv")
    assert manifest["arrival_slot"].between(1, 20).all()
    assert len(pd.read_csv(tmp_path / "competences.csv")) == 30


def test_run_writes_one_deterministic_row(tmp_path):
    args = ("run", "--config", SYNTHETIC, "--T", "40", "--TL", "5", "--seed", "1")
    assert cli(tmp_path / "a", *args) == 0
    assert cli(tmp_path / "b", *args) == 0

    first = (tmp_path / "a" / "pair.csv").read_bytes()
    assert first == (tmp_path / "b" / "pair.csv").read_bytes()
    row = pd.read_csv(tmp_path / "a" / "pair.csv")
    assert len(row) == 1
    assert {"T", "T_L", "seed", "utility_genie", "utility_learned", "regret", "ratio"} <= set(row.columns)
    assert (tmp_path / "a" / "pair_timings.csv").exists()


def test_run_writes_genie_trace(tmp_path):
    assert cli(tmp_path, "run", "--config", SYNTHETIC, "--T", "30", "--TL", "5", "--seed", "2", "--trace") == 0
    trace = pd.read_csv(tmp_path / "genie_trace.csv")
    assert set(trace["event"]) <= {"arrive", "assign", "exit"}
    assert "max_arrivals" in pd.read_csv(tmp_path / "pair.csv").columns


def test_run_on_dataset_writes_remap_tables(tmp_path):
    dataset = write_dense_dataset(tmp_path / "labels.txt")
    config = tmp_path / "replay.cfg"
    config.write_text(f"HORIZON=30\nN_CLASSIFIERS=4\nDATASET_PATH={dataset.as_posix()}\nSEED=4\n")
    assert cli(tmp_path, "run", "--config", str(config), "--TL", "5") == 0
    assert pd.read_csv(tmp_path / "pair.csv").loc[0, "label_source"] == "weighted_majority"
    assert len(pd.read_csv(tmp_path / "worker_map.csv")) == 4
    assert len(pd.read_csv(tmp_path / "item_map.csv")) == 30


def test_run_rejects_learning_past_horizon(tmp_path):
    assert cli(tmp_path, "run", "--config", SYNTHETIC, "--T", "10", "--TL", "10") == 2


def test_missing_config(tmp_path):
    assert cli(tmp_path, "run", "--config", str(tmp_path / "none.cfg"), "--TL", "5") == 2


def test_sweeps(tmp_path):
    common = ("--config", SYNTHETIC, "--seeds", "1", "--workers", "1", "--grid", "5,10")
    assert cli(tmp_path, "sweep-tl", *common, "--T", "30") == 0
    summary = pd.read_csv(tmp_path / "sweep_tl.csv")
    assert summary["T_L"].tolist() == [5, 10]

    assert cli(tmp_path, "sweep-horizon", *common, "--t-grid", "20,30", "--plot") == 0
    rows = pd.read_csv(tmp_path / "sweep_T.csv")
    assert rows["T"].tolist() == [20, 30]
    assert (tmp_path / "sweep_T.svg").exists()
    assert (tmp_path / "sweep_T_cells_timings.csv").exists()


def test_verify_small(tmp_path):
    golden = tmp_path / "golden.csv"
    args = ("verify", "--instances", "5", "--perturb-trials", "3", "--submod-cases", "20", "--exit-horizon", "50", "--golden", str(golden))
    assert cli(tmp_path, *args) == 0
    assert not golden.exists()
    assert len(pd.read_csv(tmp_path / "verify_competitive.csv")) == 5

    assert cli(tmp_path, *args, "--regen-golden") == 0
    assert golden.exists()
    assert cli(tmp_path, *args) == 0


def test_learn_only(tmp_path):
    dataset = write_dense_dataset(tmp_path / "labels.txt")

    assert cli(tmp_path, "learn-only", "--dataset", str(dataset)) == 0
    learned = pd.read_csv(tmp_path / "learned.csv")
    assert learned["worker_id"].tolist() == ["w0", "w1", "w2", "w3"]
    assert learned["p_hat"].between(0.5, 1.0).all()
    assert (tmp_path / "item_map.csv").exists()


def test_learn_only_missing_dataset(tmp_path):
    assert cli(tmp_path, "learn-only", "--dataset", str(tmp_path / "absent.txt")) == 2


def test_unknown_experiment_set(tmp_path):
    assert cli(tmp_path, "sweep-tl", "--config", SYNTHETIC, "--set", "no_such_set") == 2


@pytest.mark.parametrize("argv", [["bogus"], ["run"], ["verify", "--instances", "many"]])
def test_usage_errors_exit_2(argv):
    with pytest.raises(SystemExit) as info:
        main(argv)
    assert info.value.code == 2


BIRD_LABELS = Path(__file__).parent / "data" / "bird" / "labels.txt"


@pytest.mark.slow
@pytest.mark.skipif(not BIRD_LABELS.exists(), reason="Bird labels not present")
def test_bird_sweep_tl(tmp_path):
    args = ("sweep-tl", "--config", str(CONFIG_DIR / "bird.cfg"), "--grid", "5,45,250", "--seeds", "2", "--workers", "1")
    assert cli(tmp_path, *args) == 0
    summary = pd.read_csv(tmp_path / "sweep_tl.csv")
    assert summary["T_L"].tolist() == [5, 45, 250]
    assert summary["mean_learn_error_inf"].notna().all()
    assert len(pd.read_csv(tmp_path / "worker_map.csv")) == 39
