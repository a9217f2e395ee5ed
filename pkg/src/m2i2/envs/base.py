"""Shared environment contract for the cooperative grid benchmarks."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class EnvSpec:
    """Static dimensions of an environment instance."""

    n_agents: int
    obs_dim: int
    state_dim: int
    n_actions: int
    episode_limit: int

    def __post_init__(self):
        for name in ("n_agents", "obs_dim", "state_dim", "n_actions", "episode_limit"):
            if getattr(self, name) <= 0:
                raise ValueError(f"EnvSpec.{name} must be strictly positive")


@dataclass
class StepResult:
    """One transition: team reward, termination, and the resulting state/observations."""

    reward: float
    terminated: bool
    next_state: np.ndarray
    next_obs: list[np.ndarray]
    won: bool = False
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.won and not self.terminated:
            raise ValueError("won implies terminated")


class MultiAgentEnv:
    """Deterministic-given-seed Dec-POMDP with a uniform reset/step/spec interface.

    Instances are single-threaded and not shareable; run one per rollout worker.
    """

    def spec(self) -> EnvSpec:
        raise NotImplementedError

    def reset(self, seed: int) -> tuple[np.ndarray, list[np.ndarray]]:
        """Start a new episode. Returns (global state, per-agent observations)."""
        raise NotImplementedError

    def step(self, joint_action) -> StepResult:
        raise NotImplementedError

    def avail_actions(self, agent: int) -> np.ndarray:
        """Boolean action mask for one agent. All-true in these environments."""
        if not 0 <= agent < self.spec().n_agents:
            raise ValueError(f"agent index {agent} out of range")
        return np.ones(self.spec().n_actions, dtype=bool)

    def avail_all(self) -> np.ndarray:
        """Stacked action masks, shape [n_agents, n_actions]."""
        return np.stack([self.avail_actions(i) for i in range(self.spec().n_agents)])

    def _check_actions(self, joint_action, terminated: bool):
        if terminated:
            raise RuntimeError("step() called on a terminated episode; call reset()")
        spec = self.spec()
        actions = np.asarray(joint_action)
        if actions.shape != (spec.n_agents,):
            raise ValueError(f"expected {spec.n_agents} actions, got shape {actions.shape}")
        if ((actions < 0) | (actions >= spec.n_actions)).any():
            raise ValueError(f"action out of range [0, {spec.n_actions})")
        return actions.astype(np.int64)
