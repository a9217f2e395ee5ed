"""Predator-Prey gridworld: cooperative capture with a lone-tagging penalty."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .base import EnvSpec, MultiAgentEnv, StepResult

STAY, UP, DOWN, LEFT, RIGHT = 0, 1, 2, 3, 4
_MOVES = np.array([[0, 0], [-1, 0], [1, 0], [0, -1], [0, 1]], dtype=np.int64)

PRESETS = {
    "medium": (10, 6, 6),
    "hard": (15, 8, 8),
}


@dataclass
class PredatorPreyConfig:
    grid_size: int = 10
    n_predators: int = 6
    n_preys: int = 6
    view_radius: int = 2
    episode_limit: int = 200

    def __post_init__(self):
        if min(self.grid_size, self.n_predators, self.n_preys, self.episode_limit) <= 0:
            raise ValueError("grid_size, unit counts, and episode_limit must be positive")
        if self.view_radius < 0:
            raise ValueError("view_radius must be >= 0")
        if self.grid_size < 2 * self.view_radius + 1:
            raise ValueError("grid_size must be >= 2*view_radius + 1")
        if self.grid_size < 2:
            raise ValueError("grid_size must be >= 2")
        if self.n_predators > self.grid_size**2:
            raise ValueError("more predators than cells")

    @classmethod
    def preset(cls, name: str) -> "PredatorPreyConfig":
        try:
            grid, n_pred, n_prey = PRESETS[name.lower()]
        except KeyError:
            raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
        return cls(grid_size=grid, n_predators=n_pred, n_preys=n_prey)


class PredatorPreyEnv(MultiAgentEnv):
    """Predators herd randomly moving preys on a bounded grid.

    Per step: predators move, preys move uniformly at random, then each alive
    prey is checked against the predators in its closed 4-neighborhood
    (own cell plus the four orthogonal neighbors): two or more predators
    capture it for +1; exactly one tags it for -2 and the prey survives.
    Moves into walls clamp in place and units may share cells. The episode
    ends when all preys are captured or at the step limit.

    Observation: (2v+1)^2 x 2 flattened window counts (predators, preys),
    own normalized (row, col), one-hot agent id. State: normalized (row, col)
    per predator, then (row, col, alive) per prey (captured preys freeze).
    """

    def __init__(self, config: PredatorPreyConfig | None = None):
        self.config = config or PredatorPreyConfig()
        c = self.config
        self.window = 2 * c.view_radius + 1
        self._spec = EnvSpec(
            n_agents=c.n_predators,
            obs_dim=self.window**2 * 2 + 2 + c.n_predators,
            state_dim=2 * c.n_predators + 3 * c.n_preys,
            n_actions=5,
            episode_limit=c.episode_limit,
        )
        self._rng = np.random.default_rng(0)
        self.predators = np.zeros((c.n_predators, 2), dtype=np.int64)
        self.preys = np.zeros((c.n_preys, 2), dtype=np.int64)
        self.prey_alive = np.zeros(c.n_preys, dtype=bool)
        self._t = 0
        self._terminated = True

    def spec(self) -> EnvSpec:
        return self._spec

    @property
    def t(self) -> int:
        return self._t

    def reset(self, seed: int):
        c = self.config
        self._rng = np.random.default_rng(seed)
        cells = self._rng.choice(c.grid_size**2, size=c.n_predators, replace=False)
        self.predators = np.stack([cells // c.grid_size, cells % c.grid_size], axis=1)
        prey_cells = self._rng.integers(0, c.grid_size**2, size=c.n_preys)
        self.preys = np.stack([prey_cells // c.grid_size, prey_cells % c.grid_size], axis=1)
        self.prey_alive = np.ones(c.n_preys, dtype=bool)
        self._t = 0
        self._terminated = False
        return self._state(), self._obs()

    def step(self, joint_action) -> StepResult:
        actions = self._check_actions(joint_action, self._terminated)
        g = self.config.grid_size
        self.predators = np.clip(self.predators + _MOVES[actions], 0, g - 1)
        alive_idx = np.flatnonzero(self.prey_alive)
        if alive_idx.size:
            prey_actions = self._rng.integers(0, 5, size=alive_idx.size)
            self.preys[alive_idx] = np.clip(
                self.preys[alive_idx] + _MOVES[prey_actions], 0, g - 1
            )

        reward = 0.0
        for i in np.flatnonzero(self.prey_alive):
            dist = np.abs(self.predators - self.preys[i]).sum(axis=1)
            n_close = int((dist <= 1).sum())
            if n_close >= 2:
                self.prey_alive[i] = False
                reward += 1.0
            elif n_close == 1:
                reward -= 2.0

        self._t += 1
        won = not self.prey_alive.any()
        terminated = won or self._t >= self._spec.episode_limit
        self._terminated = terminated
        return StepResult(
            reward=reward,
            terminated=terminated,
            next_state=self._state(),
            next_obs=self._obs(),
            won=won,
        )

    def _state(self) -> np.ndarray:
        denom = self.config.grid_size - 1
        parts = [self.predators.astype(np.float32).ravel() / denom]
        prey_part = np.concatenate(
            [self.preys.astype(np.float32) / denom, self.prey_alive[:, None].astype(np.float32)],
            axis=1,
        )
        parts.append(prey_part.ravel())
        return np.concatenate(parts)

    def _obs(self) -> list[np.ndarray]:
        c = self.config
        v = c.view_radius
        denom = c.grid_size - 1
        pred_grid = np.zeros((c.grid_size, c.grid_size), dtype=np.float32)
        np.add.at(pred_grid, (self.predators[:, 0], self.predators[:, 1]), 1.0)
        prey_grid = np.zeros_like(pred_grid)
        alive = self.preys[self.prey_alive]
        if alive.size:
            np.add.at(prey_grid, (alive[:, 0], alive[:, 1]), 1.0)
        pred_pad = np.pad(pred_grid, v)
        prey_pad = np.pad(prey_grid, v)

        obs = []
        for i, (r, col) in enumerate(self.predators):
            window_p = pred_pad[r : r + 2 * v + 1, col : col + 2 * v + 1]
            window_q = prey_pad[r : r + 2 * v + 1, col : col + 2 * v + 1]
            own = np.array([r / denom, col / denom], dtype=np.float32)
            agent_id = np.zeros(c.n_predators, dtype=np.float32)
            agent_id[i] = 1.0
            obs.append(np.concatenate([window_p.ravel(), window_q.ravel(), own, agent_id]))
        return obs

    def decode_state(self, state: np.ndarray):
        """(predator positions, prey positions, alive flags) from a state vector."""
        c = self.config
        denom = c.grid_size - 1
        state = np.asarray(state, dtype=np.float64)
        pred = np.rint(state[: 2 * c.n_predators].reshape(-1, 2) * denom).astype(np.int64)
        rest = state[2 * c.n_predators :].reshape(-1, 3)
        prey = np.rint(rest[:, :2] * denom).astype(np.int64)
        alive = rest[:, 2] > 0.5
        return pred, prey, alive
