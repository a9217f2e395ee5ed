"""Policy network, state decoder, inverse model, and value-decomposition mixers."""

from __future__ import annotations

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F


class PolicyNet(nn.Module):
    """Recurrent per-agent utility network over (own observation, integrated z)."""

    def __init__(self, obs_dim: int, z_dim: int, n_actions: int, hidden_dim: int = 32):
        super().__init__()
        self.obs_dim = obs_dim
        self.z_dim = z_dim
        self.n_actions = n_actions
        self.hidden_dim = hidden_dim
        self.fc_obs = nn.Linear(obs_dim, hidden_dim)
        self.fc_mix = nn.Linear(hidden_dim + z_dim, hidden_dim)
        self.rnn = nn.GRUCell(hidden_dim, hidden_dim)
        self.fc_q = nn.Linear(hidden_dim, n_actions)

    def init_hidden(self, batch: int) -> torch.Tensor:
        return self.fc_obs.weight.new_zeros(batch, self.hidden_dim)

    def forward(self, obs: torch.Tensor, z: torch.Tensor, hidden: torch.Tensor):
        if obs.shape[-1] != self.obs_dim or z.shape[-1] != self.z_dim:
            raise ValueError(
                f"expected obs width {self.obs_dim} and z width {self.z_dim}, "
                f"got {obs.shape[-1]} and {z.shape[-1]}"
            )
        x = F.relu(self.fc_obs(obs))
        x = F.relu(self.fc_mix(torch.cat([x, z], dim=-1)))
        h = self.rnn(x, hidden)
        q = self.fc_q(h)
        return q, h


class StateDecoder(nn.Module):
    """Reconstructs the global state from the integrated representation z."""

    def __init__(self, z_dim: int, state_dim: int, hidden_dim: int = 32):
        super().__init__()
        self.z_dim = z_dim
        self.state_dim = state_dim
        self.fc1 = nn.Linear(z_dim, hidden_dim)
        self.fc2 = nn.Linear(hidden_dim, state_dim)

    def forward(self, z: torch.Tensor) -> torch.Tensor:
        if z.shape[-1] != self.z_dim:
            raise ValueError(f"expected z width {self.z_dim}, got {z.shape[-1]}")
        return self.fc2(F.relu(self.fc1(z)))


class InverseModel(nn.Module):
    """Predicts the joint action linking two consecutive integrated representations.

    One shared 64-wide embedding layer is applied to z_t and z_{t+1} separately;
    the concatenated embeddings pass through a two-hidden-layer MLP with a
    per-agent head. forward returns logits [..., n_agents, n_actions].
    """

    def __init__(self, z_dim: int, n_agents: int, n_actions: int, embed_dim: int = 64):
        super().__init__()
        self.z_dim = z_dim
        self.n_agents = n_agents
        self.n_actions = n_actions
        self.fc_embed = nn.Linear(z_dim, embed_dim)
        self.fc_hidden = nn.Linear(2 * embed_dim, embed_dim)
        self.fc_head = nn.Linear(embed_dim, n_agents * n_actions)

    def forward(self, z_t: torch.Tensor, z_t1: torch.Tensor) -> torch.Tensor:
        if z_t.shape != z_t1.shape or z_t.shape[-1] != self.z_dim:
            raise ValueError(
                f"expected matching z pairs of width {self.z_dim}, "
                f"got {tuple(z_t.shape)} and {tuple(z_t1.shape)}"
            )
        e_t = F.relu(self.fc_embed(z_t))
        e_t1 = F.relu(self.fc_embed(z_t1))
        x = F.relu(self.fc_hidden(torch.cat([e_t, e_t1], dim=-1)))
        logits = self.fc_head(x)
        return logits.view(*logits.shape[:-1], self.n_agents, self.n_actions)


def predict_joint_action(model: InverseModel, z_t: torch.Tensor, z_t1: torch.Tensor) -> torch.Tensor:
    """Per-agent action distributions [..., n_agents, n_actions]; rows sum to 1."""
    return torch.softmax(model(z_t, z_t1), dim=-1)


class QmixMixer(nn.Module):
    """Monotonic state-conditioned mixer: per-agent utilities -> joint value.

    Mixing weights come from absolute-valued hypernetwork outputs, so the joint
    value is non-decreasing in every agent utility.
    """

    def __init__(self, n_agents: int, state_dim: int, mixing_dim: int = 32):
        super().__init__()
        self.n_agents = n_agents
        self.state_dim = state_dim
        self.mixing_dim = mixing_dim
        self.hyper_w1 = nn.Linear(state_dim, n_agents * mixing_dim)
        self.hyper_b1 = nn.Linear(state_dim, mixing_dim)
        self.hyper_w2 = nn.Linear(state_dim, mixing_dim)
        self.hyper_b2 = nn.Sequential(
            nn.Linear(state_dim, mixing_dim),
            nn.ReLU(),
            nn.Linear(mixing_dim, 1),
        )

    def forward(self, agent_qs: torch.Tensor, state: torch.Tensor) -> torch.Tensor:
        """agent_qs [B, n_agents], state [B, state_dim] -> Q_tot [B]."""
        if agent_qs.shape[-1] != self.n_agents or state.shape[-1] != self.state_dim:
            raise ValueError(
                f"expected agent_qs width {self.n_agents} and state width {self.state_dim}, "
                f"got {agent_qs.shape[-1]} and {state.shape[-1]}"
            )
        batch = agent_qs.shape[0]
        w1 = torch.abs(self.hyper_w1(state)).view(batch, self.n_agents, self.mixing_dim)
        b1 = self.hyper_b1(state).view(batch, 1, self.mixing_dim)
        hidden = F.elu(agent_qs.view(batch, 1, self.n_agents) @ w1 + b1)
        w2 = torch.abs(self.hyper_w2(state)).view(batch, self.mixing_dim, 1)
        b2 = self.hyper_b2(state).view(batch, 1, 1)
        return (hidden @ w2 + b2).view(batch)


def mix_vdn(agent_qs: torch.Tensor) -> torch.Tensor:
    """Sum decomposition: agent_qs [..., n_agents] -> Q_tot [...]."""
    if agent_qs.shape[-1] == 0:
        raise ValueError("agent_qs must be nonempty")
    return agent_qs.sum(dim=-1)


def select_action(q, avail, epsilon: float, rng: np.random.Generator) -> int:
    """Epsilon-greedy pick: uniform available action w.p. epsilon, else masked argmax.

    Argmax ties break toward the lowest index.
    """
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError(f"epsilon must be in [0, 1], got {epsilon}")
    if isinstance(q, torch.Tensor):
        q = q.detach().cpu().numpy()
    q = np.asarray(q, dtype=np.float64)
    avail = np.asarray(avail, dtype=bool)
    if q.shape != avail.shape:
        raise ValueError(f"shape mismatch: q {q.shape} vs avail {avail.shape}")
    legal = np.flatnonzero(avail)
    if legal.size == 0:
        raise ValueError("no available actions")
    if rng.random() < epsilon:
        return int(rng.choice(legal))
    masked = np.where(avail, q, -np.inf)
    return int(masked.argmax())
