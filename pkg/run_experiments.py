"""
Scheduling Experiments CLI
Generate arrival streams, compare the genie and two-phase schedulers,
sweep learning lengths and horizons, and run the oracle checks.

Usage:
    python run_experiments.py gen --config config/synthetic.cfg --T 1000
    python run_experiments.py run --T 4000 --TL 45
    python run_experiments.py sweep-tl --T 10000 --seeds 5
    python run_experiments.py sweep-horizon --set synthetic_horizon --plot
    python run_experiments.py verify --instances 200
    python run_experiments.py learn-only --dataset data/dog/labels.txt --clubbing 1:1,2:1,3:2,4:2

Exit codes: 0 success, 1 failed verification, 2 usage or input error.
"""

import argparse
import json
import sys
import time
from pathlib import Path
from typing import List, Optional

import pandas as pd

from src.data_collection.datasets import load_dataset, write_remap_tables
from src.evaluation import oracle
from src.evaluation.bench import (
    build_stream,
    results_frame,
    run_pair,
    sweep_horizon,
    sweep_tl,
    write_cells,
    write_csv,
)
from src.evaluation.plots import plot_sweep_horizon, plot_sweep_tl
from src.learning.online_learn import online_learn
from src.simulation import settings
from src.simulation.errors import ConfigError, DatasetError, EstimationError, SchedulingError
from src.simulation.model import load_config
from src.simulation.scheduler import PhasePlan

EXPERIMENTS_FILE = Path("config/experiments.json")
GOLDEN_FILE = Path("config/golden_opt.csv")
DEFAULT_CONFIG = "config/synthetic.cfg"


def banner(title: str):
    print("=" * 70)
    print(title)
    print("=" * 70)


def int_list(text: str) -> List[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def clubbing_map(text: str) -> dict:
    try:
        return {int(a): int(b) for a, b in (pair.split(":") for pair in text.split(","))}
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'from:to' pairs, got {text!r}")


def load_experiments(path: Path = EXPERIMENTS_FILE) -> dict:
    if not path.exists():
        return {}
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def apply_set(args, experiments: dict):
    """Fill unset arguments from a named experiment set."""
    if not getattr(args, "set", None):
        return
    sets = experiments.get("experiment_sets", {})
    if args.set not in sets:
        raise ConfigError(f"Unknown experiment set {args.set!r}; available: {', '.join(sorted(sets))}")
    chosen = sets[args.set]
    if chosen.get("command", args.command) != args.command:
        raise ConfigError(f"Set {args.set!r} is for '{chosen['command']}', not '{args.command}'")
    if "config" in chosen and args.config == DEFAULT_CONFIG:
        args.config = chosen["config"]
    for key, attr in (("T", "T"), ("tl_grid", "grid"), ("t_grid", "t_grid"), ("seeds", "seeds")):
        if key in chosen and getattr(args, attr, None) is None:
            setattr(args, attr, chosen[key])


def out_dir(args) -> Path:
    path = Path(args.out) if args.out else settings.results_dir()
    path.mkdir(parents=True, exist_ok=True)
    return path


def write_dataset_maps(config, out: Path):
    """item_map.csv and worker_map.csv for replayed datasets."""
    if config.dataset_path:
        table = load_dataset(config.dataset_path, config.clubbing, config.max_workers_in_dataset, config.gold_path)
        write_remap_tables(table, out)


def workers_for(args, experiments: dict) -> int:
    if args.workers:
        return args.workers
    return experiments.get("max_workers") or settings.max_workers()


# ============================================================================
# Commands
# ============================================================================

def cmd_gen(args, experiments) -> int:
    config = load_config(args.config, horizon=args.T, seed=args.seed)
    stream, competences = build_stream(config, config.seed)
    out = out_dir(args)

    write_csv(stream.to_manifest(), out / "stream_manifest.csv")
    write_csv(
        pd.DataFrame({"classifier_id": range(len(competences)), "competence": competences}),
        out / "competences.csv",
    )
    write_dataset_maps(config, out)

    banner("STREAM GENERATED")
    print(f"Slots:       {stream.horizon}")
    print(f"Samples:     {stream.n_samples} ({stream.realized_mean_arrivals:.2f} per slot)")
    print(f"Mean weight: {stream.realized_mean_weight:.3f}")
    print(f"Digest:      {stream.digest()[:16]}")
    print(f"[OK] Manifest: {out / 'stream_manifest.csv'}")
    return 0


def cmd_run(args, experiments) -> int:
    config = load_config(args.config, horizon=args.T, seed=args.seed)
    plan = PhasePlan(args.TL, config.horizon)
    out = out_dir(args)
    trace_path = out / "genie_trace.csv" if args.trace else None
    result = run_pair(config, plan, config.seed, trace_path=trace_path)
    frame = results_frame([result], include_timing=True)
    paths = write_cells(frame, out, "pair")
    write_dataset_maps(config, out)

    banner(f"GENIE vs TWO-PHASE  (T={plan.horizon}, T_L={plan.t_learn})")
    print(f"Genie utility:     {result.utility_genie:.3f}")
    print(f"Learned utility:   {result.utility_learned:.3f}")
    print(f"Regret:            {result.regret:.3f} (normalized {result.regret_normalized:.3f})")
    print(f"Competitive ratio: {result.ratio:.4f}")
    print(f"max |p_hat - p|:   {result.learn_error_inf:.4f}")
    print(f"Peak arrivals:     {result.max_arrivals} per slot")
    if trace_path is not None:
        print(f"[OK] Trace: {trace_path}")
    print(f"[OK] Results: {paths[0]}")
    return 0


def cmd_sweep_tl(args, experiments) -> int:
    defaults = experiments.get("defaults", {})
    config = load_config(args.config, seed=args.seed)
    T = args.T or config.horizon
    grid = [t for t in (args.grid or defaults.get("tl_grid", [5, 15, 25, 45])) if t < T]
    seeds = args.seeds or defaults.get("seeds", 5)
    config = config.model_copy(update={"horizon": T})

    banner(f"T_L SWEEP  (T={T}, {len(grid)} learning lengths x {seeds} seeds)")
    start = time.time()
    summary, cells, best = sweep_tl(config, T, grid, seeds, workers=workers_for(args, experiments))
    out = out_dir(args)
    write_csv(summary, out / "sweep_tl.csv")
    write_cells(cells, out, "sweep_tl_cells")
    write_dataset_maps(config, out)
    if args.plot:
        plot_sweep_tl(summary, out / "sweep_tl.svg", title=f"T = {T}")

    print(summary.to_string(index=False))
    print(f"\nBest T_L: {best}  ({time.time() - start:.1f}s)")
    print(f"[OK] Results: {out / 'sweep_tl.csv'}")
    return 0


def cmd_sweep_horizon(args, experiments) -> int:
    defaults = experiments.get("defaults", {})
    config = load_config(args.config, seed=args.seed)
    t_grid = args.t_grid or defaults.get("t_grid", [1000, 2000])
    tl_grid = args.grid or defaults.get("tl_grid", [5, 15, 25, 45])
    seeds = args.seeds or defaults.get("seeds", 5)

    banner(f"HORIZON SWEEP  (T in {t_grid})")
    start = time.time()
    rows, cells = sweep_horizon(config, t_grid, tl_grid, seeds, workers=workers_for(args, experiments))
    out = out_dir(args)
    write_csv(rows, out / "sweep_T.csv")
    write_cells(cells, out, "sweep_T_cells")
    write_dataset_maps(config, out)
    if args.plot:
        plot_sweep_horizon(rows, out / "sweep_T.svg")

    print(rows[["T", "best_TL", "regret", "regret_normalized", "ratio"]].to_string(index=False))
    print(f"\n({time.time() - start:.1f}s)")
    print(f"[OK] Results: {out / 'sweep_T.csv'}")
    return 0


def cmd_verify(args, experiments) -> int:
    out = out_dir(args)
    failures = []

    banner("ORACLE CHECKS")
    competitive = oracle.verify_competitive(args.instances, args.seed)
    write_csv(competitive, out / "verify_competitive.csv")
    bad = int((~competitive["half_competitive"] | ~competitive["opt_dominates"]).sum())
    print(f"Greedy >= OPT/2:        {len(competitive) - bad}/{len(competitive)}")
    if bad:
        failures.append(f"{bad} instance(s) below OPT/2 or above OPT")

    perturbed = oracle.verify_perturbation(args.perturb_trials, args.seed + 1)
    write_csv(perturbed, out / "verify_perturbation.csv")
    changed = int((perturbed["differences"] > 0).sum())
    print(f"Perturbation-invariant: {len(perturbed) - changed}/{len(perturbed)}")
    if changed:
        failures.append(f"{changed} perturbed ledger(s) changed")

    submod = oracle.verify_submodularity(args.submod_cases, args.seed + 2)
    write_csv(submod, out / "verify_submodularity.csv")
    broken = int((~submod["ok"]).sum())
    print(f"Diminishing returns:    {len(submod) - broken}/{len(submod)}")
    if broken:
        failures.append(f"{broken} diminishing-returns violation(s)")

    exits = oracle.verify_exit_soundness(args.exit_horizon, args.seed)
    write_csv(exits, out / "verify_exit_soundness.csv")
    late = int((~exits["ok"]).sum())
    print(f"Exits final:            {len(exits) - late}/{len(exits)}")
    if late:
        failures.append(f"{late} sample(s) retired with a positive gain left")

    if args.regen_golden:
        oracle.write_golden(args.golden)
        print(f"[OK] Golden values regenerated: {args.golden}")
    elif Path(args.golden).exists():
        mismatched = oracle.diff_golden(args.golden)
        print(f"Golden OPT values:      {'match' if not mismatched else f'{len(mismatched)} differ'}")
        if mismatched:
            failures.append(f"golden OPT mismatch on instances {mismatched}")

    if failures:
        for failure in failures:
            print(f"[Error] {failure}")
        return 1
    print("[OK] All oracle checks passed")
    return 0


def cmd_learn_only(args, experiments) -> int:
    table = load_dataset(args.dataset, args.clubbing, args.max_workers, args.gold)
    learned = online_learn(table.label_matrix(), max_iters=args.max_iters, literal_flip=args.literal_flip)
    out = out_dir(args)
    write_remap_tables(table, out)
    frame = pd.DataFrame(
        {
            "worker_index": range(table.n_workers),
            "worker_id": table.workers,
            "p_hat": learned.p_hat,
        }
    )
    write_csv(frame, out / "learned.csv")

    banner(f"ONLINE LEARN  ({table.summary()})")
    print(f"EM iterations: {learned.iterations_run} (converged: {learned.converged})")
    if learned.fallback_classifiers:
        print(f"Majority-agreement fallback: {learned.fallback_classifiers}")
    for worker, p in zip(table.workers, learned.p_hat):
        print(f"  {worker:>12}  {p:.4f}")
    print(f"[OK] Results: {out / 'learned.csv'}")
    return 0


COMMANDS = {
    "gen": cmd_gen,
    "run": cmd_run,
    "sweep-tl": cmd_sweep_tl,
    "sweep-horizon": cmd_sweep_horizon,
    "verify": cmd_verify,
    "learn-only": cmd_learn_only,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Online crowdsourcing scheduling experiments")
    parser.add_argument("--out", help="Results directory (default: RESULTS_DIR or results)")
    parser.add_argument("--log-level", help="loguru level (default: LOG_LEVEL or INFO)")
    sub = parser.add_subparsers(dest="command", required=True)

    def with_config(p):
        p.add_argument("--config", default=DEFAULT_CONFIG, help="Flat key=value SimConfig file")
        p.add_argument("--seed", type=int, help="Override the config seed")
        return p

    gen = with_config(sub.add_parser("gen", help="Write an arrival stream manifest"))
    gen.add_argument("--T", type=int, help="Horizon (default: config)")

    run = with_config(sub.add_parser("run", help="One genie vs two-phase pair"))
    run.add_argument("--T", type=int, help="Horizon (default: config)")
    run.add_argument("--TL", type=int, required=True, help="Learning length")
    run.add_argument("--trace", action="store_true", help="Also write the genie run's event trace CSV")

    for name, helptext in (("sweep-tl", "Sweep learning lengths"), ("sweep-horizon", "Sweep horizons")):
        p = with_config(sub.add_parser(name, help=helptext))
        p.add_argument("--set", help="Named experiment set from config/experiments.json")
        p.add_argument("--grid", type=int_list, help="Comma-separated T_L grid")
        p.add_argument("--seeds", type=int, help="Replicates per cell")
        p.add_argument("--workers", type=int, help="Parallel worker processes")
        p.add_argument("--plot", action="store_true", help="Also write an SVG chart")
        if name == "sweep-tl":
            p.add_argument("--T", type=int, help="Horizon (default: config)")
        else:
            p.add_argument("--t-grid", type=int_list, help="Comma-separated horizons")

    verify = sub.add_parser("verify", help="Oracle suites on tiny instances")
    verify.add_argument("--instances", type=int, default=200)
    verify.add_argument("--perturb-trials", type=int, default=100)
    verify.add_argument("--submod-cases", type=int, default=1000)
    verify.add_argument("--exit-horizon", type=int, default=2000, help="Horizon of the exit-soundness run")
    verify.add_argument("--seed", type=int, default=7)
    verify.add_argument("--golden", default=str(GOLDEN_FILE), help="Golden OPT CSV")
    verify.add_argument("--regen-golden", action="store_true", help="Rewrite the golden OPT CSV")

    learn = sub.add_parser("learn-only", help="Estimate competences from a dataset file")
    learn.add_argument("--dataset", required=True, help="'item worker class' triple file")
    learn.add_argument("--clubbing", type=clubbing_map, help="Class merge map, e.g. 1:1,2:1,3:2,4:2")
    learn.add_argument("--max-workers", type=int, help="Keep the N workers with most labels")
    learn.add_argument("--gold", help="Optional 'item class' gold file")
    learn.add_argument("--max-iters", type=int, default=100)
    learn.add_argument("--literal-flip", action="store_true", help="Flip when the mean is >= 1/K")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    settings.setup_logging(args.log_level)
    experiments = load_experiments()

    try:
        apply_set(args, experiments)
        return COMMANDS[args.command](args, experiments)
    except (ConfigError, DatasetError, SchedulingError, EstimationError, FileNotFoundError, ValueError) as e:
        print(f"[Error] {e}")
        return 2


if __name__ == "__main__":
    sys.exit(main())
