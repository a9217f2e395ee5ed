"""Hallway and Hallwaygroup: parallel Markov chains with simultaneous-arrival rewards."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .base import EnvSpec, MultiAgentEnv, StepResult

LEFT, RIGHT, STAY = 0, 1, 2

DEFAULT_CHAIN_LENGTHS = (4, 6, 8, 10)
# 7 agents in two groups; chains (3,5,7) and (4,6,8,10).
GROUP_CHAIN_LENGTHS = (3, 5, 7, 4, 6, 8, 10)
DEFAULT_GROUPS = ((0, 1, 2), (3, 4, 5, 6))


@dataclass
class HallwayConfig:
    chain_lengths: tuple[int, ...] = DEFAULT_CHAIN_LENGTHS
    groups: tuple[tuple[int, ...], ...] | None = None

    def __post_init__(self):
        self.chain_lengths = tuple(int(l) for l in self.chain_lengths)
        if not self.chain_lengths:
            raise ValueError("chain_lengths must be non-empty")
        if any(l < 2 for l in self.chain_lengths):
            raise ValueError("each chain length must be >= 2")
        if self.groups is not None:
            self.groups = tuple(tuple(int(a) for a in g) for g in self.groups)
            n = len(self.chain_lengths)
            members = [a for g in self.groups for a in g]
            if sorted(members) != list(range(n)):
                raise ValueError("groups must partition the agent indices exactly")
            if any(len(g) == 0 for g in self.groups):
                raise ValueError("groups must be non-empty")

    @classmethod
    def group_default(cls) -> "HallwayConfig":
        return cls(chain_lengths=GROUP_CHAIN_LENGTHS, groups=DEFAULT_GROUPS)


class HallwayEnv(MultiAgentEnv):
    """n agents on chains of differing lengths; position 0 is the shared goal.

    The episode ends the first time any agent stands on the goal (or at the step
    limit). Plain Hallway pays a team reward of 1 only when every agent arrives
    simultaneously. The grouped variant pays 0.5 per group arriving as a complete
    group, requires distinct groups to arrive on distinct steps, and cancels all
    accumulated reward on any partial or same-step multi-group arrival.

    Observation: one-hot own position over (max_chain+1) slots, then one-hot
    agent id. State: concatenated per-agent position one-hots.
    """

    def __init__(self, config: HallwayConfig | None = None):
        self.config = config or HallwayConfig()
        self.lengths = np.asarray(self.config.chain_lengths, dtype=np.int64)
        self.n_agents = len(self.lengths)
        self.max_len = int(self.lengths.max())
        self.pos_slots = self.max_len + 1
        self.groups = self.config.groups
        self._spec = EnvSpec(
            n_agents=self.n_agents,
            obs_dim=self.pos_slots + self.n_agents,
            state_dim=self.n_agents * self.pos_slots,
            n_actions=3,
            episode_limit=self.max_len + 10,
        )
        self.positions = np.zeros(self.n_agents, dtype=np.int64)
        self._t = 0
        self._terminated = True
        self._group_scored: list[bool] = []
        self._score_steps: list[int] = []
        self._accumulated = 0.0

    def spec(self) -> EnvSpec:
        return self._spec

    @property
    def t(self) -> int:
        return self._t

    def reset(self, seed: int):
        rng = np.random.default_rng(seed)
        # uniform over {1..l_i}: never starts on the goal
        self.positions = rng.integers(1, self.lengths + 1)
        self._t = 0
        self._terminated = False
        if self.groups is not None:
            self._group_scored = [False] * len(self.groups)
            self._score_steps = []
        self._accumulated = 0.0
        return self._state(), self._obs()

    def step(self, joint_action) -> StepResult:
        actions = self._check_actions(joint_action, self._terminated)
        delta = np.where(actions == LEFT, -1, np.where(actions == RIGHT, 1, 0))
        if self.groups is not None:
            # agents of a scored group are parked on the goal
            parked = np.zeros(self.n_agents, dtype=bool)
            for g, scored in zip(self.groups, self._group_scored):
                if scored:
                    parked[list(g)] = True
            delta = np.where(parked, 0, delta)
        self.positions = np.clip(self.positions + delta, 0, self.lengths)
        self._t += 1

        if self.groups is None:
            reward, terminated, won = self._resolve_plain()
        else:
            reward, terminated, won = self._resolve_grouped()
        if not terminated and self._t >= self._spec.episode_limit:
            terminated = True
        self._terminated = terminated
        return StepResult(
            reward=reward,
            terminated=terminated,
            next_state=self._state(),
            next_obs=self._obs(),
            won=won,
        )

    def _resolve_plain(self):
        at_goal = self.positions == 0
        if not at_goal.any():
            return 0.0, False, False
        won = bool(at_goal.all())
        return (1.0 if won else 0.0), True, won

    def _resolve_grouped(self):
        at_goal = self.positions == 0
        reward = 0.0
        completed_now = []
        failed = False
        for gi, g in enumerate(self.groups):
            if self._group_scored[gi]:
                continue
            member_goal = at_goal[list(g)]
            if member_goal.all():
                completed_now.append(gi)
            elif member_goal.any():
                failed = True  # partial arrival
        if len(completed_now) > 1:
            failed = True  # two groups on the same step
        if failed:
            # cancel prior scores so the episode total is 0
            reward = -self._accumulated
            self._accumulated = 0.0
            return reward, True, False
        if completed_now:
            gi = completed_now[0]
            self._group_scored[gi] = True
            self._score_steps.append(self._t)
            reward = 0.5
            self._accumulated += reward
        won = all(self._group_scored) and len(set(self._score_steps)) == len(self.groups)
        terminated = all(self._group_scored)
        return reward, terminated, won

    def _state(self) -> np.ndarray:
        state = np.zeros(self._spec.state_dim, dtype=np.float32)
        for i, p in enumerate(self.positions):
            state[i * self.pos_slots + p] = 1.0
        return state

    def _obs(self) -> list[np.ndarray]:
        obs = []
        for i, p in enumerate(self.positions):
            o = np.zeros(self._spec.obs_dim, dtype=np.float32)
            o[p] = 1.0
            o[self.pos_slots + i] = 1.0
            obs.append(o)
        return obs

    def decode_state(self, state: np.ndarray) -> np.ndarray:
        """Positions encoded in a state vector (round-trip check helper)."""
        blocks = np.asarray(state).reshape(self.n_agents, self.pos_slots)
        return blocks.argmax(axis=1)
