"""Benchmark environments: Hallway, Hallwaygroup, and Predator-Prey."""

from __future__ import annotations

from .base import EnvSpec, MultiAgentEnv, StepResult
from .hallway import HallwayConfig, HallwayEnv
from .predator_prey import PredatorPreyConfig, PredatorPreyEnv

ENV_KINDS = ("hallway", "hallwaygroup", "predator_prey")


def make_env(kind: str, config=None) -> MultiAgentEnv:
    """Build an environment by kind; config defaults to the standard setup.

    `config` may be the matching config dataclass, a dict of its fields, or
    (for predator_prey) a preset name.
    """
    if kind == "hallway":
        cfg = config if config is not None else HallwayConfig()
        if isinstance(cfg, dict):
            cfg = HallwayConfig(**cfg)
        if not isinstance(cfg, HallwayConfig):
            raise ValueError("hallway expects a HallwayConfig or a dict of its fields")
        if cfg.groups is not None:
            raise ValueError("hallway takes no groups; use kind='hallwaygroup'")
        return HallwayEnv(cfg)
    if kind == "hallwaygroup":
        cfg = config if config is not None else HallwayConfig.group_default()
        if isinstance(cfg, dict):
            cfg = HallwayConfig(**cfg)
        if not isinstance(cfg, HallwayConfig):
            raise ValueError("hallwaygroup expects a HallwayConfig or a dict of its fields")
        if cfg.groups is None:
            raise ValueError("hallwaygroup requires a group partition")
        return HallwayEnv(cfg)
    if kind == "predator_prey":
        cfg = config if config is not None else PredatorPreyConfig()
        if isinstance(cfg, str):
            cfg = PredatorPreyConfig.preset(cfg)
        if isinstance(cfg, dict):
            cfg = PredatorPreyConfig(**cfg)
        if not isinstance(cfg, PredatorPreyConfig):
            raise ValueError("predator_prey expects a PredatorPreyConfig, a dict, or a preset name")
        return PredatorPreyEnv(cfg)
    raise ValueError(f"unknown environment kind {kind!r}; choose from {ENV_KINDS}")


__all__ = [
    "ENV_KINDS",
    "EnvSpec",
    "HallwayConfig",
    "HallwayEnv",
    "MultiAgentEnv",
    "PredatorPreyConfig",
    "PredatorPreyEnv",
    "StepResult",
    "make_env",
]
