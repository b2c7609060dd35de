"""
Sweep Plots
===========
SVG line charts from the sweep CSVs:
- utility and estimation error vs learning length
- normalized regret and competitive ratio vs horizon
"""

from pathlib import Path
from typing import Union

import matplotlib

matplotlib.use("Agg")  # Set non-interactive backend to prevent figure windows

import matplotlib.pyplot as plt
import pandas as pd

# Stable element ids so repeated runs produce the same SVG
plt.rcParams["svg.hashsalt"] = "sweep-plots"


def _save(fig, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, format="svg", bbox_inches="tight", metadata={"Date": None})
    plt.close(fig)
    return path


def plot_sweep_tl(summary: pd.DataFrame, path: Union[str, Path], title: str = "") -> Path:
    fig, (ax_util, ax_err) = plt.subplots(1, 2, figsize=(11, 4))

    ax_util.errorbar(
        summary["T_L"],
        summary["mean_utility_learned"],
        yerr=summary["std_utility_learned"],
        marker="o",
        capsize=3,
        label="two-phase",
    )
    ax_util.plot(summary["T_L"], summary["mean_utility_genie"], linestyle="--", label="genie")
    ax_util.set_xscale("log")
    ax_util.set_xlabel("learning length T_L")
    ax_util.set_ylabel("utility")
    ax_util.legend()
    ax_util.grid(True, alpha=0.3)

    ax_err.plot(summary["T_L"], summary["mean_learn_error_inf"], marker="s", color="tab:red")
    ax_err.set_xscale("log")
    ax_err.set_xlabel("learning length T_L")
    ax_err.set_ylabel("max |p_hat - p|")
    ax_err.grid(True, alpha=0.3)

    if title:
        fig.suptitle(title)
    return _save(fig, path)


def plot_sweep_horizon(rows: pd.DataFrame, path: Union[str, Path], title: str = "") -> Path:
    fig, (ax_regret, ax_ratio) = plt.subplots(1, 2, figsize=(11, 4))

    ax_regret.plot(rows["T"], rows["regret_normalized"], marker="o")
    ax_regret.set_xlabel("horizon T")
    ax_regret.set_ylabel("normalized regret")
    ax_regret.grid(True, alpha=0.3)

    ax_ratio.plot(rows["T"], rows["ratio"], marker="o", label="two-phase / genie")
    ax_ratio.plot(rows["T"], rows["ratio_floor"], linestyle="--", label="1/2 - ln T / T")
    ax_ratio.set_xlabel("horizon T")
    ax_ratio.set_ylabel("competitive ratio")
    ax_ratio.legend()
    ax_ratio.grid(True, alpha=0.3)

    if title:
        fig.suptitle(title)
    return _save(fig, path)
