"""Selective message sharing: importance scoring, top-k masking, attention integration.

Tensor conventions: observations/messages are [..., obs_dim]; recurrent hidden
states are [..., 32]. All modules are shared across agents (the agent-id part
of the observation differentiates behavior).
"""

from __future__ import annotations

import math

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F


def kept_count(obs_dim: int, mask_ratio: float) -> int:
    """Transmitted dimensions per message: k = ceil((1 - mask_ratio) * D)."""
    if not 0.0 <= mask_ratio <= 1.0:
        raise ValueError(f"mask_ratio must be in [0, 1], got {mask_ratio}")
    if obs_dim <= 0:
        raise ValueError("obs_dim must be positive")
    return min(obs_dim, math.ceil((1.0 - mask_ratio) * obs_dim))


def comm_frequency(obs_dim: int, mask_ratio: float) -> float:
    """Fraction of observation dimensions transmitted per step, k/D."""
    return kept_count(obs_dim, mask_ratio) / obs_dim


class DRN(nn.Module):
    """Recurrent per-dimension importance scorer: obs -> weights in (0,1)^D."""

    def __init__(self, obs_dim: int, hidden_dim: int = 32):
        super().__init__()
        self.obs_dim = obs_dim
        self.hidden_dim = hidden_dim
        self.fc_in = nn.Linear(obs_dim, hidden_dim)
        self.rnn = nn.GRUCell(hidden_dim, hidden_dim)
        self.fc_out = nn.Linear(hidden_dim, obs_dim)

    def init_hidden(self, batch: int) -> torch.Tensor:
        return self.fc_in.weight.new_zeros(batch, self.hidden_dim)

    def forward(self, obs: torch.Tensor, hidden: torch.Tensor):
        if obs.shape[-1] != self.obs_dim:
            raise ValueError(f"expected obs of width {self.obs_dim}, got {obs.shape[-1]}")
        x = F.relu(self.fc_in(obs))
        h = self.rnn(x, hidden)
        weights = torch.sigmoid(self.fc_out(h))
        return weights, h


def top_k_filter(weights: torch.Tensor, k: int) -> torch.Tensor:
    """Keep the k largest entries along the last axis, zero the rest.

    Ties break toward the lower index. Selection is treated as constant:
    gradients flow through the kept entries only.
    """
    d = weights.shape[-1]
    if not 0 <= k <= d:
        raise ValueError(f"k must be in [0, {d}], got {k}")
    order = torch.argsort(weights.detach(), dim=-1, descending=True, stable=True)
    mask = torch.zeros_like(weights)
    mask.scatter_(-1, order[..., :k], 1.0)
    return weights * mask


def build_message(obs: torch.Tensor, filtered: torch.Tensor) -> torch.Tensor:
    """Message payload: elementwise product of observation and filtered weights."""
    if obs.shape != filtered.shape:
        raise ValueError(
            f"shape mismatch: obs {tuple(obs.shape)} vs filter {tuple(filtered.shape)}"
        )
    return obs * filtered


def random_filter(
    obs_dim: int, k: int, rng: np.random.Generator, batch_shape: tuple = ()
) -> torch.Tensor:
    """Unweighted 0/1 mask keeping k uniformly chosen dimensions.

    Used by the ablation that replaces learned importance with random masking.
    `batch_shape` prepends independent leading axes.
    """
    if not 0 <= k <= obs_dim:
        raise ValueError(f"k must be in [0, {obs_dim}], got {k}")
    scores = rng.random(tuple(batch_shape) + (obs_dim,))
    ranks = scores.argsort(axis=-1).argsort(axis=-1)
    return torch.as_tensor(ranks < k, dtype=torch.float32)


class MessageEncoder(nn.Module):
    """Attention-pooled recurrent message integrator producing z of width 8*n_agents.

    Message payloads are projected to queries/keys (16-wide) and values
    (32-wide); scaled dot-product self-attention mixes them; the mean over the
    attention outputs advances a recurrent cell whose state maps linearly to z.

    With include_self=True all n messages are integrated into one shared z per
    batch row (hidden shape [B, 1, 32]); with include_self=False each agent
    integrates only the other agents' messages, adding a per-receiver axis
    (hidden shape [B, n, 32]).
    """

    def __init__(
        self,
        obs_dim: int,
        n_agents: int,
        attn_dim: int = 16,
        value_dim: int = 32,
        hidden_dim: int = 32,
    ):
        super().__init__()
        self.obs_dim = obs_dim
        self.n_agents = n_agents
        self.attn_dim = attn_dim
        self.value_dim = value_dim
        self.hidden_dim = hidden_dim
        self.z_dim = 8 * n_agents
        self.q_proj = nn.Linear(obs_dim, attn_dim)
        self.k_proj = nn.Linear(obs_dim, attn_dim)
        self.v_proj = nn.Linear(obs_dim, value_dim)
        self.rnn = nn.GRUCell(value_dim, hidden_dim)
        self.fc_out = nn.Linear(hidden_dim, self.z_dim)

    def init_hidden(self, batch: int, include_self: bool = True) -> torch.Tensor:
        cols = 1 if include_self else self.n_agents
        return self.q_proj.weight.new_zeros(batch, cols, self.hidden_dim)

    def _attend(self, messages: torch.Tensor) -> torch.Tensor:
        """[*, m, obs_dim] -> mean-pooled attention output [*, value_dim]."""
        q = self.q_proj(messages)
        k = self.k_proj(messages)
        v = self.v_proj(messages)
        scores = q @ k.transpose(-2, -1) / math.sqrt(self.attn_dim)
        attn = torch.softmax(scores, dim=-1)
        return (attn @ v).mean(dim=-2)

    def forward(self, messages: torch.Tensor, hidden: torch.Tensor, include_self: bool = True):
        """messages [B, n, obs_dim], hidden [B, cols, 32] -> (z [B, cols, z_dim], hidden')."""
        if messages.ndim != 3:
            raise ValueError(f"expected messages [batch, n_agents, obs_dim], got {messages.shape}")
        batch, n, d = messages.shape
        if n == 0:
            raise ValueError("empty message list")
        if n != self.n_agents or d != self.obs_dim:
            raise ValueError(
                f"expected [*, {self.n_agents}, {self.obs_dim}] messages, got {messages.shape}"
            )
        if include_self:
            pooled = self._attend(messages).unsqueeze(1)
        else:
            if n < 2:
                raise ValueError("excluding the own message requires at least 2 agents")
            pooled = torch.stack(
                [
                    self._attend(messages[:, [j for j in range(n) if j != i], :])
                    for i in range(n)
                ],
                dim=1,
            )
        cols = pooled.shape[1]
        if hidden.shape != (batch, cols, self.hidden_dim):
            raise ValueError(
                f"expected hidden {(batch, cols, self.hidden_dim)}, got {tuple(hidden.shape)}"
            )
        h = self.rnn(
            pooled.reshape(batch * cols, self.value_dim),
            hidden.reshape(batch * cols, self.hidden_dim),
        ).view(batch, cols, self.hidden_dim)
        z = self.fc_out(h)
        return z, h
