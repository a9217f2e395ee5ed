"""Learning-curve figures aggregated across seeds."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .config import load_config
from .metrics import read_metrics
from .runner import CONFIG_FILENAME

LOSS_KEYS = ("loss_rl", "loss_rc", "loss_inv")


def _series(run_dir, metric: str):
    records = read_metrics(run_dir)
    steps = np.array([r.env_steps for r in records], dtype=np.float64)
    values = [getattr(r, metric) for r in records]
    if all(v is None for v in values):
        raise ValueError(f"run {run_dir} has no values for metric {metric!r}")
    pairs = [(s, v) for s, v in zip(steps, values) if v is not None]
    return np.array([p[0] for p in pairs]), np.array([p[1] for p in pairs])


def group_by_variant(run_dirs) -> dict:
    """Group run directories by (variant, mask_ratio) read from their configs."""
    groups: dict = {}
    for run_dir in run_dirs:
        config = load_config(Path(run_dir) / CONFIG_FILENAME)
        label = config.variant
        if config.variant != "qmix":
            label += f" rate={1.0 - config.learner.mask_ratio:.1f}"
        groups.setdefault(label, []).append(run_dir)
    return groups


def plot_metric(groups: dict, out_path: str | Path, metric: str = "test_win_rate") -> Path:
    """Mean curve with a min-max band per group; a single run plots unshaded."""
    if not groups or not any(groups.values()):
        raise ValueError("no run directories to plot")
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(7, 4.5))
    for label, run_dirs in groups.items():
        if not run_dirs:
            raise ValueError(f"group {label!r} has no run directories")
        series = [_series(d, metric) for d in run_dirs]
        grid = series[0][0]
        stacked = np.stack(
            [np.interp(grid, steps, values) for steps, values in series]
        )
        mean = stacked.mean(axis=0)
        (line,) = ax.plot(grid, mean, label=label)
        if len(series) > 1:
            ax.fill_between(
                grid, stacked.min(axis=0), stacked.max(axis=0),
                alpha=0.2, color=line.get_color(), linewidth=0,
            )
    ax.set_xlabel("env steps")
    ax.set_ylabel(metric)
    ax.legend()
    ax.grid(True, alpha=0.3)
    out_path = Path(out_path)
    fig.tight_layout()
    fig.savefig(out_path, dpi=110)
    plt.close(fig)
    return out_path


def plot_losses(run_dirs, out_path: str | Path) -> Path:
    """Loss-component curves (mean across the given runs)."""
    if not run_dirs:
        raise ValueError("no run directories to plot")
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, axes = plt.subplots(1, len(LOSS_KEYS), figsize=(4 * len(LOSS_KEYS), 3.2))
    for ax, key in zip(np.atleast_1d(axes), LOSS_KEYS):
        try:
            series = [_series(d, key) for d in run_dirs]
        except ValueError:
            ax.set_title(f"{key} (absent)")
            ax.axis("off")
            continue
        grid = series[0][0]
        stacked = np.stack([np.interp(grid, s, v) for s, v in series])
        ax.plot(grid, stacked.mean(axis=0))
        if len(series) > 1:
            ax.fill_between(grid, stacked.min(axis=0), stacked.max(axis=0), alpha=0.2)
        ax.set_xlabel("env steps")
        ax.set_title(key)
        ax.grid(True, alpha=0.3)
    out_path = Path(out_path)
    fig.tight_layout()
    fig.savefig(out_path, dpi=110)
    plt.close(fig)
    return out_path
