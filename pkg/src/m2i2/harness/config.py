"""Flat dotted-key run configuration.

A run is described by a plain text file of `key = value` lines (`#` comments),
e.g.::

    env.kind = hallway
    env.chain_lengths = 3,4,5
    variant = m2i2
    learner.mask_ratio = 0.4
    run.total_steps = 300000
    run.seed = 0

Every learner hyperparameter is a named default; the file only lists
deviations, which keeps experiment records small and diffable.
"""

from __future__ import annotations

import dataclasses
import hashlib
import os
from dataclasses import dataclass, field
from pathlib import Path

from ..envs import ENV_KINDS, HallwayConfig, PredatorPreyConfig
from ..learner import VARIANTS, LearnerConfig

OUTPUT_ROOT_VAR = "M2I2_OUTPUT_ROOT"

_RUN_FIELDS = {
    "total_steps": int,
    "eval_interval": int,
    "eval_episodes": int,
    "seed": int,
    "output_dir": str,
    "name": str,
    "batch_size_run": int,
    "updates_per_episode": float,
    "stop_win_rate": float,
    "record_comm": str,
    "checkpoint_interval": int,
}


@dataclass
class RunConfig:
    env_kind: str = "hallway"
    env_config: dict = field(default_factory=dict)
    variant: str = "m2i2"
    learner: LearnerConfig = field(default_factory=LearnerConfig)
    total_steps: int = 300_000
    eval_interval: int = 10_000
    eval_episodes: int = 32
    seed: int = 0
    output_dir: str | None = None  # resolved against the output root
    name: str | None = None  # run directory stem when output_dir is not given
    batch_size_run: int = 8  # environment instances rolled out in lockstep
    updates_per_episode: float = 1.0  # train iterations per collected episode
    stop_win_rate: float | None = None  # stop once a greedy eval reaches this
    record_comm: str = "eval"  # eval | train | off
    checkpoint_interval: int = 0  # extra checkpoints every N env steps (0 = final only)

    def __post_init__(self):
        if self.env_kind not in ENV_KINDS:
            raise ValueError(f"unknown env kind {self.env_kind!r}; choose from {ENV_KINDS}")
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; choose from {VARIANTS}")
        if self.total_steps < 1 or self.eval_interval < 1:
            raise ValueError("total_steps and eval_interval must be >= 1")
        if self.eval_episodes < 1:
            raise ValueError("eval_episodes must be >= 1")
        if self.batch_size_run < 1:
            raise ValueError("batch_size_run must be >= 1")
        if self.updates_per_episode < 0.0:
            raise ValueError("updates_per_episode must be >= 0")
        if self.stop_win_rate is not None and not 0.0 <= self.stop_win_rate <= 1.0:
            raise ValueError("stop_win_rate must be in [0, 1]")
        if self.record_comm not in ("eval", "train", "off"):
            raise ValueError("record_comm must be one of eval, train, off")
        if self.checkpoint_interval < 0:
            raise ValueError("checkpoint_interval must be >= 0")

    # -- flat-key round trip ------------------------------------------------

    @classmethod
    def from_flat(cls, flat: dict) -> "RunConfig":
        """Build from a dotted-key dict; unknown keys are rejected."""
        env_kind = "hallway"
        env_config: dict = {}
        variant = "m2i2"
        learner_kwargs: dict = {}
        run_kwargs: dict = {}
        learner_fields = {f.name: f.type for f in dataclasses.fields(LearnerConfig)}
        for key, raw in flat.items():
            if key == "variant":
                variant = str(raw)
            elif key == "env.kind":
                env_kind = str(raw)
            elif key.startswith("env."):
                env_config[key[len("env."):]] = raw
            elif key.startswith("learner."):
                name = key[len("learner."):]
                if name not in learner_fields:
                    raise ValueError(f"unknown learner option {key!r}")
                learner_kwargs[name] = raw
            elif key.startswith("run."):
                name = key[len("run."):]
                if name not in _RUN_FIELDS:
                    raise ValueError(f"unknown run option {key!r}")
                run_kwargs[name] = None if raw is None else _RUN_FIELDS[name](raw)
            else:
                raise ValueError(f"unknown config key {key!r}")
        return cls(
            env_kind=env_kind,
            env_config=env_config,
            variant=variant,
            learner=LearnerConfig(**learner_kwargs),
            **run_kwargs,
        )

    def to_flat(self) -> dict:
        """Dotted-key dict carrying every field (full defaults included)."""
        flat = {"env.kind": self.env_kind, "variant": self.variant}
        for key, value in sorted(self.env_config.items()):
            flat[f"env.{key}"] = value
        for f in dataclasses.fields(LearnerConfig):
            flat[f"learner.{f.name}"] = getattr(self.learner, f.name)
        for name in _RUN_FIELDS:
            value = getattr(self, name)
            if value is not None:
                flat[f"run.{name}"] = value
        return flat

    def config_hash(self) -> str:
        """Digest of the run-defining fields (output location excluded)."""
        flat = self.to_flat()
        flat.pop("run.output_dir", None)
        flat.pop("run.name", None)
        text = "\n".join(f"{k} = {_format_value(v)}" for k, v in sorted(flat.items()))
        return hashlib.sha256(text.encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# flat text format


def _parse_value(text: str):
    text = text.strip()
    lowered = text.lower()
    if lowered in ("true", "false"):
        return lowered == "true"
    if lowered in ("none", ""):
        return None
    if "|" in text:  # tuple of int tuples, e.g. agent groups 0,1,2|3,4,5,6
        return tuple(tuple(int(x) for x in part.split(",") if x.strip()) for part in text.split("|"))
    if "," in text:
        return tuple(_parse_value(x) for x in text.split(",") if x.strip())
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        pass
    return text


def _format_value(value) -> str:
    if isinstance(value, tuple):
        if value and isinstance(value[0], tuple):
            return "|".join(",".join(str(x) for x in part) for part in value)
        return ",".join(str(x) for x in value)
    return str(value)


def parse_flat_config(text: str) -> dict:
    """Parse `key = value` lines into a dotted-key dict."""
    flat = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ValueError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = stripped.split("=", 1)
        flat[key.strip()] = _parse_value(raw)
    return flat


def format_flat_config(flat: dict) -> str:
    return "".join(f"{k} = {_format_value(v)}\n" for k, v in sorted(flat.items()))


def load_config(path: str | Path, overrides: dict | None = None) -> RunConfig:
    """Read a config file and apply dotted-key overrides on top."""
    flat = parse_flat_config(Path(path).read_text())
    for key, value in (overrides or {}).items():
        flat[key] = _parse_value(value) if isinstance(value, str) else value
    return RunConfig.from_flat(flat)


# ---------------------------------------------------------------------------
# environment construction and output locations


def resolve_env_config(kind: str, env_config: dict):
    """Turn the flat env.* dict into the matching config dataclass.

    predator_prey accepts `preset = medium|hard` plus field overrides.
    """
    cfg = dict(env_config)
    if kind in ("hallway", "hallwaygroup"):
        if not cfg:
            return HallwayConfig() if kind == "hallway" else HallwayConfig.group_default()
        return HallwayConfig(**cfg)
    if kind == "predator_prey":
        preset = cfg.pop("preset", None)
        base = PredatorPreyConfig.preset(preset) if preset else PredatorPreyConfig()
        return dataclasses.replace(base, **cfg) if cfg else base
    raise ValueError(f"unknown env kind {kind!r}")


def output_root() -> Path:
    return Path(os.environ.get(OUTPUT_ROOT_VAR, "runs"))


def resolve_run_dir(config: RunConfig) -> Path:
    """Pick a fresh run directory under the output root."""
    if config.output_dir is not None:
        base = Path(config.output_dir)
        if not base.is_absolute():
            base = output_root() / base
    else:
        stem = config.name or f"{config.env_kind}_{config.variant}_seed{config.seed}"
        base = output_root() / stem
    run_dir = base
    suffix = 1
    while run_dir.exists():
        run_dir = base.with_name(f"{base.name}_{suffix}")
        suffix += 1
    run_dir.mkdir(parents=True)
    return run_dir
