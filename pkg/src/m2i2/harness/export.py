"""Exports of logged communication records: mask statistics, embeddings, heatmaps.

Records come from greedy evaluation episodes (see runner.evaluate_policy):
per step, the importance weights omega [n, D], the boolean keep mask [n, D],
and the integrated representation z [cols, 8n].
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .runner import EVAL_RECORDS_FILENAME

RETENTION_FILENAME = "mask_retention.json"
EMBEDDINGS_FILENAME = "embeddings.csv"


def load_comm_records(run_dir: str | Path) -> dict:
    path = Path(run_dir) / EVAL_RECORDS_FILENAME
    if not path.exists():
        raise FileNotFoundError(
            f"no communication records at {path}; the run either used a "
            "communication-free variant or disabled recording"
        )
    with np.load(path) as data:
        return {key: data[key] for key in data.files}


def parse_segments(text: str) -> list[tuple[str, int, int]]:
    """Parse 'name:start:stop,...' into observation segments (stop exclusive)."""
    segments = []
    for part in text.split(","):
        fields = part.strip().split(":")
        if len(fields) != 3:
            raise ValueError(f"segment {part!r} is not name:start:stop")
        name, start, stop = fields[0], int(fields[1]), int(fields[2])
        if start < 0 or stop <= start:
            raise ValueError(f"segment {part!r} has an empty or negative range")
        segments.append((name, start, stop))
    return segments


def mask_retention(records: dict, segments=None) -> dict:
    """Per-dimension keep frequencies, split by segment and episode stage.

    The stage split follows the exploration-vs-endgame convention: a step
    belongs to 'early' if it lies in the first 80% of its episode, else 'late'.
    """
    mask = records["mask"].astype(np.float64)  # [S, n, D]
    t = records["t"]
    length = records["length"]
    n_steps, n_agents, dims = mask.shape
    if segments is None:
        segments = [("obs", 0, dims)]
    for name, start, stop in segments:
        if stop > dims:
            raise ValueError(f"segment {name!r} ends at {stop}, beyond obs width {dims}")
    early = t < 0.8 * length
    stages = {"early": early, "late": ~early}

    def freq(rows) -> list:
        return mask[rows].mean(axis=(0, 1)).tolist() if rows.any() else None

    out = {
        "n_steps": int(n_steps),
        "n_agents": int(n_agents),
        "obs_dim": int(dims),
        "overall": mask.mean(axis=(0, 1)).tolist(),
        "stages": {
            name: {"steps": int(rows.sum()), "per_dim": freq(rows)}
            for name, rows in stages.items()
        },
        "segments": {},
    }
    for name, start, stop in segments:
        seg = mask[:, :, start:stop]
        entry = {"range": [start, stop], "overall": float(seg.mean())}
        for stage, rows in stages.items():
            entry[stage] = float(seg[rows].mean()) if rows.any() else None
        out["segments"][name] = entry
    return out


def write_embeddings(records: dict, path: Path) -> Path:
    """Dump each recorded representation as one CSV row: time label then z."""
    z = records["z"]  # [S, cols, z_dim]
    t = records["t"]
    z_dim = z.shape[-1]
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["t"] + [f"z{i}" for i in range(z_dim)])
        for step in range(z.shape[0]):
            for col in range(z.shape[1]):
                writer.writerow([int(t[step])] + [f"{v:.6g}" for v in z[step, col]])
    return path


def write_heatmaps(records: dict, out_dir: Path) -> list[Path]:
    """Per-agent importance (or mask) heatmap over one episode's steps."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    weights = records.get("omega", records["mask"]).astype(np.float64)
    first = records["episode"] == records["episode"][0]
    episode = weights[first]  # [L, n, D]
    paths = []
    for agent in range(episode.shape[1]):
        fig, ax = plt.subplots(figsize=(6, 3))
        image = ax.imshow(
            episode[:, agent].T, aspect="auto", origin="lower", cmap="viridis",
            vmin=0.0, vmax=1.0, interpolation="nearest",
        )
        ax.set_xlabel("episode step")
        ax.set_ylabel("observation dimension")
        ax.set_title(f"agent {agent} importance weights")
        fig.colorbar(image, ax=ax, label="weight")
        path = out_dir / f"omega_agent{agent}.png"
        fig.tight_layout()
        fig.savefig(path, dpi=110)
        plt.close(fig)
        paths.append(path)
    return paths


def export_artifacts(run_dir: str | Path, segments=None) -> dict:
    """Write retention stats, the embedding dump, and heatmaps for a run."""
    run_dir = Path(run_dir)
    records = load_comm_records(run_dir)
    retention = mask_retention(records, segments)
    retention_path = run_dir / RETENTION_FILENAME
    retention_path.write_text(json.dumps(retention, indent=2, sort_keys=True))
    embeddings_path = write_embeddings(records, run_dir / EMBEDDINGS_FILENAME)
    heatmap_paths = write_heatmaps(records, run_dir)
    return {
        "retention": retention_path,
        "embeddings": embeddings_path,
        "heatmaps": heatmap_paths,
    }
