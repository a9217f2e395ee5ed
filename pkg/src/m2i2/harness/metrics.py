"""Metrics stream records and the communication-efficiency measure."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path


@dataclass
class MetricsRecord:
    """One evaluation point in a run's metrics stream.

    Loss fields are averages over the training updates since the previous
    record; they are None before the first update. wall_clock is seconds since
    training started and is the one field exempt from the determinism
    contract (it measures the host, not the run).
    """

    env_steps: int
    test_win_rate: float
    test_mean_return: float
    test_return_se: float
    epsilon: float
    comm_frequency: float
    wall_clock: float
    loss: float | None = None
    loss_rl: float | None = None
    loss_rc: float | None = None
    loss_inv: float | None = None

    def __post_init__(self):
        if self.env_steps < 0:
            raise ValueError("env_steps must be >= 0")
        if not 0.0 <= self.test_win_rate <= 1.0:
            raise ValueError(f"win rate must be in [0, 1], got {self.test_win_rate}")
        if not 0.0 <= self.comm_frequency <= 1.0:
            raise ValueError(f"comm_frequency must be in [0, 1], got {self.comm_frequency}")
        for name in ("test_mean_return", "test_return_se", "epsilon", "wall_clock"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        for name in ("loss", "loss_rl", "loss_rc", "loss_inv"):
            value = getattr(self, name)
            if value is not None and not math.isfinite(value):
                raise ValueError(f"{name} must be finite when present")

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "MetricsRecord":
        return cls(**json.loads(line))


METRICS_FILENAME = "metrics.jsonl"


def append_record(run_dir: str | Path, record: MetricsRecord):
    with open(Path(run_dir) / METRICS_FILENAME, "a") as f:
        f.write(record.to_json() + "\n")


def read_metrics(run_dir: str | Path) -> list[MetricsRecord]:
    path = Path(run_dir) / METRICS_FILENAME
    if not path.exists():
        raise FileNotFoundError(f"no metrics stream at {path}")
    records = [MetricsRecord.from_json(line) for line in path.read_text().splitlines() if line]
    if not records:
        raise ValueError(f"empty metrics stream at {path}")
    return records


def comm_efficiency(perf: float, baseline_perf: float, frequency: float) -> float:
    """Performance improvement over a communication-free baseline per unit of
    communication: (perf - baseline_perf) / frequency."""
    if not 0.0 < frequency <= 1.0:
        raise ValueError(f"frequency must be in (0, 1], got {frequency}")
    return (perf - baseline_perf) / frequency
