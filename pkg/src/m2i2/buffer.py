"""Episode containers and the FIFO replay buffer."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np
import torch


class Episode:
    """One complete episode with a trailing observation/state for bootstrapping.

    obs [T+1, n, D], states [T+1, state_dim], actions [T, n], rewards [T],
    terminated [T] (1.0 at the step that truly ended the episode).
    """

    def __init__(self, obs, states, actions, rewards, terminated):
        self.obs = np.asarray(obs, dtype=np.float32)
        self.states = np.asarray(states, dtype=np.float32)
        self.actions = np.asarray(actions, dtype=np.int64)
        self.rewards = np.asarray(rewards, dtype=np.float32)
        self.terminated = np.asarray(terminated, dtype=np.float32)
        t = self.actions.shape[0]
        if t < 1:
            raise ValueError("episode must contain at least one transition")
        if self.obs.shape[0] != t + 1 or self.states.shape[0] != t + 1:
            raise ValueError("obs/states must hold one more step than actions")
        if self.rewards.shape != (t,) or self.terminated.shape != (t,):
            raise ValueError("rewards/terminated must align with actions")
        if self.obs.ndim != 3 or self.actions.ndim != 2:
            raise ValueError("obs must be [T+1, n, D] and actions [T, n]")
        if self.obs.shape[1] != self.actions.shape[1]:
            raise ValueError("agent axes of obs and actions disagree")

    @property
    def length(self) -> int:
        return self.actions.shape[0]


class EpisodeBuilder:
    """Accumulates one rollout step-by-step into an Episode."""

    def __init__(self, state, obs):
        self.states = [np.asarray(state, dtype=np.float32)]
        self.obs = [np.stack(obs).astype(np.float32)]
        self.actions = []
        self.rewards = []
        self.terminated = []

    def add(self, actions, reward, terminated, next_state, next_obs):
        self.actions.append(np.asarray(actions, dtype=np.int64))
        self.rewards.append(float(reward))
        self.terminated.append(float(terminated))
        self.states.append(np.asarray(next_state, dtype=np.float32))
        self.obs.append(np.stack(next_obs).astype(np.float32))

    def build(self) -> Episode:
        return Episode(
            obs=np.stack(self.obs),
            states=np.stack(self.states),
            actions=np.stack(self.actions),
            rewards=np.asarray(self.rewards),
            terminated=np.asarray(self.terminated),
        )


@dataclass
class EpisodeBatch:
    """Episodes padded to a common length; `filled` marks real transitions."""

    obs: torch.Tensor  # [B, T+1, n, D]
    states: torch.Tensor  # [B, T+1, state_dim]
    actions: torch.Tensor  # [B, T, n]
    rewards: torch.Tensor  # [B, T]
    terminated: torch.Tensor  # [B, T]
    filled: torch.Tensor  # [B, T]

    @property
    def batch_size(self) -> int:
        return self.obs.shape[0]

    @property
    def max_steps(self) -> int:
        return self.actions.shape[1]

    @property
    def n_agents(self) -> int:
        return self.obs.shape[2]

    @classmethod
    def from_episodes(cls, episodes: list[Episode], pad_to: int | None = None) -> "EpisodeBatch":
        if not episodes:
            raise ValueError("cannot batch zero episodes")
        t_max = max(ep.length for ep in episodes)
        if pad_to is not None:
            t_max = max(t_max, pad_to)
        b = len(episodes)
        n, d = episodes[0].obs.shape[1], episodes[0].obs.shape[2]
        s = episodes[0].states.shape[1]
        obs = torch.zeros(b, t_max + 1, n, d)
        states = torch.zeros(b, t_max + 1, s)
        actions = torch.zeros(b, t_max, n, dtype=torch.int64)
        rewards = torch.zeros(b, t_max)
        terminated = torch.zeros(b, t_max)
        filled = torch.zeros(b, t_max)
        for i, ep in enumerate(episodes):
            t = ep.length
            obs[i, : t + 1] = torch.from_numpy(ep.obs)
            states[i, : t + 1] = torch.from_numpy(ep.states)
            actions[i, :t] = torch.from_numpy(ep.actions)
            rewards[i, :t] = torch.from_numpy(ep.rewards)
            terminated[i, :t] = torch.from_numpy(ep.terminated)
            filled[i, :t] = 1.0
        return cls(obs, states, actions, rewards, terminated, filled)

    def padded(self, extra_steps: int) -> "EpisodeBatch":
        """Same batch with `extra_steps` all-padding steps appended."""
        if extra_steps < 0:
            raise ValueError("extra_steps must be >= 0")
        b, _, n, d = self.obs.shape
        zeros = lambda *shape: torch.zeros(*shape, dtype=self.obs.dtype)
        return EpisodeBatch(
            obs=torch.cat([self.obs, zeros(b, extra_steps, n, d)], dim=1),
            states=torch.cat([self.states, zeros(b, extra_steps, self.states.shape[2])], dim=1),
            actions=torch.cat(
                [self.actions, torch.zeros(b, extra_steps, n, dtype=torch.int64)], dim=1
            ),
            rewards=torch.cat([self.rewards, zeros(b, extra_steps)], dim=1),
            terminated=torch.cat([self.terminated, zeros(b, extra_steps)], dim=1),
            filled=torch.cat([self.filled, zeros(b, extra_steps)], dim=1),
        )


class ReplayBuffer:
    """FIFO episode store with uniform without-replacement sampling."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._episodes: deque[Episode] = deque(maxlen=capacity)
        self.total_inserted = 0

    def __len__(self) -> int:
        return len(self._episodes)

    def insert(self, episode: Episode):
        self._episodes.append(episode)
        self.total_inserted += 1

    def can_sample(self, batch_size: int) -> bool:
        return len(self._episodes) >= batch_size

    def sample(self, batch_size: int, rng: np.random.Generator) -> EpisodeBatch:
        if batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not self.can_sample(batch_size):
            raise ValueError(
                f"buffer holds {len(self._episodes)} episodes, cannot sample {batch_size}"
            )
        idx = rng.choice(len(self._episodes), size=batch_size, replace=False)
        return EpisodeBatch.from_episodes([self._episodes[i] for i in idx])

    def oldest(self) -> Episode:
        if not self._episodes:
            raise ValueError("buffer is empty")
        return self._episodes[0]
