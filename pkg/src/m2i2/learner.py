"""Two-stage optimizer: TD + auxiliary losses on theta, then the DRN meta step.

Training recomputes messages and representations from stored observations with
current parameters. The regular step updates theta = (encoder, decoder,
inverse, policy, mixer) with importance weights treated as constants; the meta
step then differentiates the loss at one-step-lookahead trial parameters back
into the importance network.
"""

from __future__ import annotations

import copy
from dataclasses import asdict, dataclass

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .buffer import EpisodeBatch
from .comm import DRN, MessageEncoder, build_message, comm_frequency, kept_count, random_filter, top_k_filter
from .envs.base import EnvSpec
from .meta import meta_gradient, trial_parameters
from .models import InverseModel, PolicyNet, QmixMixer, StateDecoder, mix_vdn

VARIANTS = ("m2i2", "m2i2_no_drn", "m2i2_no_drn_no_inv", "qmix", "vdn_m2i2")


@dataclass(frozen=True)
class VariantTraits:
    uses_comm: bool  # encoder/decoder constructed, messages computed
    uses_drn: bool  # learned importance + top-k + meta step
    uses_inverse: bool
    mixer: str  # "qmix" or "vdn"


_TRAITS = {
    "m2i2": VariantTraits(True, True, True, "qmix"),
    "m2i2_no_drn": VariantTraits(True, False, True, "qmix"),
    "m2i2_no_drn_no_inv": VariantTraits(True, False, False, "qmix"),
    "qmix": VariantTraits(False, False, False, "qmix"),
    "vdn_m2i2": VariantTraits(True, True, True, "vdn"),
}


@dataclass
class LearnerConfig:
    gamma: float = 0.99
    beta: float = 1.0
    lr_theta: float = 5e-4
    lr_drn: float = 1e-4
    batch_size: int = 32
    buffer_capacity: int = 5000
    target_interval: int = 200
    epsilon_start: float = 1.0
    epsilon_finish: float = 0.05
    epsilon_anneal_steps: int = 50000
    mask_ratio: float = 0.4
    grad_clip: float = 10.0
    inverse_loss_kind: str = "squared"  # or "cross_entropy"
    include_self: bool = True  # integrate own message alongside received ones
    meta_fresh_batch: bool = False  # meta step samples its own batch

    def __post_init__(self):
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"gamma must be in [0, 1), got {self.gamma}")
        if self.beta < 0.0:
            raise ValueError(f"beta must be >= 0, got {self.beta}")
        if not 0.0 <= self.mask_ratio <= 1.0:
            raise ValueError(f"mask_ratio must be in [0, 1], got {self.mask_ratio}")
        if min(self.lr_theta, self.lr_drn) < 0.0:
            raise ValueError("learning rates must be >= 0")
        if min(self.batch_size, self.buffer_capacity, self.target_interval) < 1:
            raise ValueError("batch_size, buffer_capacity, target_interval must be >= 1")
        if self.epsilon_anneal_steps < 1:
            raise ValueError("epsilon_anneal_steps must be >= 1")
        for eps in (self.epsilon_start, self.epsilon_finish):
            if not 0.0 <= eps <= 1.0:
                raise ValueError("epsilon bounds must be in [0, 1]")
        if self.inverse_loss_kind not in ("squared", "cross_entropy"):
            raise ValueError(f"unknown inverse_loss_kind {self.inverse_loss_kind!r}")

    def epsilon_at(self, t: int) -> float:
        """Linear anneal from epsilon_start to epsilon_finish, then constant."""
        if t < 0:
            raise ValueError("step count must be >= 0")
        frac = min(1.0, t / self.epsilon_anneal_steps)
        return self.epsilon_start + (self.epsilon_finish - self.epsilon_start) * frac


@dataclass
class LossComponents:
    total: torch.Tensor
    rl: torch.Tensor
    reconstruction: torch.Tensor
    inverse: torch.Tensor

    def as_floats(self) -> dict:
        return {
            "loss": float(self.total.detach()),
            "loss_rl": float(self.rl.detach()),
            "loss_rc": float(self.reconstruction.detach()),
            "loss_inv": float(self.inverse.detach()),
        }


def td_targets(
    rewards: torch.Tensor,
    terminated: torch.Tensor,
    target_qtot_next: torch.Tensor,
    gamma: float,
) -> torch.Tensor:
    """y_t = r_t + gamma * (1 - terminated_t) * Q_tot_target(s_{t+1})."""
    return rewards + gamma * (1.0 - terminated) * target_qtot_next


class _OnlineNets(nn.Module):
    """The jointly optimized parameter groups (everything except the DRN)."""

    def __init__(self, spec: EnvSpec, z_dim: int, traits: VariantTraits):
        super().__init__()
        self.policy = PolicyNet(spec.obs_dim, z_dim, spec.n_actions)
        self.mixer = QmixMixer(spec.n_agents, spec.state_dim) if traits.mixer == "qmix" else None
        if traits.uses_comm:
            self.encoder = MessageEncoder(spec.obs_dim, spec.n_agents)
            self.decoder = StateDecoder(z_dim, spec.state_dim)
            self.inverse = (
                InverseModel(z_dim, spec.n_agents, spec.n_actions) if traits.uses_inverse else None
            )
        else:
            self.encoder = None
            self.decoder = None
            self.inverse = None


class _TargetNets(nn.Module):
    """Hard-updated copies of the value path: policy, encoder, mixer."""

    def __init__(self, nets: _OnlineNets):
        super().__init__()
        self.policy = copy.deepcopy(nets.policy)
        self.encoder = copy.deepcopy(nets.encoder) if nets.encoder is not None else None
        self.mixer = copy.deepcopy(nets.mixer) if nets.mixer is not None else None
        for p in self.parameters():
            p.requires_grad_(False)

    def sync(self, nets: _OnlineNets):
        self.policy.load_state_dict(nets.policy.state_dict())
        if self.encoder is not None:
            self.encoder.load_state_dict(nets.encoder.state_dict())
        if self.mixer is not None:
            self.mixer.load_state_dict(nets.mixer.state_dict())


class M2I2Learner:
    """Replay-trained multi-agent learner with selective-communication variants."""

    def __init__(
        self,
        env_spec: EnvSpec,
        config: LearnerConfig | None = None,
        variant: str = "m2i2",
        seed: int = 0,
        dtype: torch.dtype = torch.float32,
    ):
        if variant not in _TRAITS:
            raise ValueError(f"unknown variant {variant!r}; choose from {VARIANTS}")
        self.spec = env_spec
        self.cfg = config or LearnerConfig()
        self.variant = variant
        self.traits = _TRAITS[variant]
        self.dtype = dtype
        self.z_dim = 8 * env_spec.n_agents
        self.k = kept_count(env_spec.obs_dim, self.cfg.mask_ratio)
        self.update_count = 0

        torch.manual_seed(seed)
        self.nets = _OnlineNets(env_spec, self.z_dim, self.traits).to(dtype)
        self.drn = DRN(env_spec.obs_dim).to(dtype) if self.traits.uses_drn else None
        self.target = _TargetNets(self.nets)
        self.optimizer = torch.optim.Adam(self.nets.parameters(), lr=self.cfg.lr_theta)
        self.drn_optimizer = (
            torch.optim.Adam(self.drn.parameters(), lr=self.cfg.lr_drn)
            if self.drn is not None
            else None
        )
        # drives the ablation's random masks during training recomputation
        self._mask_rng = np.random.default_rng(np.random.SeedSequence([seed, 0xA5]))

    # ------------------------------------------------------------------
    # acting

    @property
    def comm_frequency(self) -> float:
        """Fraction of observation dimensions transmitted per step (k/D)."""
        if not self.traits.uses_comm:
            return 1.0  # baseline shares nothing selectively; no masking applies
        return comm_frequency(self.spec.obs_dim, self.cfg.mask_ratio)

    def init_hidden(self, n_envs: int) -> dict:
        n = self.spec.n_agents
        hidden = {"pol": self.nets.policy.init_hidden(n_envs * n)}
        if self.traits.uses_comm:
            hidden["enc"] = self.nets.encoder.init_hidden(n_envs, self.cfg.include_self)
        if self.traits.uses_drn:
            hidden["drn"] = self.drn.init_hidden(n_envs * n)
        return hidden

    @torch.no_grad()
    def act_step(self, obs, hidden: dict, avail, epsilon: float, rng: np.random.Generator):
        """One decentralized-execution step for a batch of environments.

        obs [R, n, D] -> (actions [R, n] int, advanced hidden, comm records).
        Records carry the per-agent importance weights and kept-dimension masks
        for export; empty for the communication-free baseline.
        """
        n, d, a = self.spec.n_agents, self.spec.obs_dim, self.spec.n_actions
        obs_t = torch.as_tensor(np.asarray(obs), dtype=self.dtype)
        n_envs = obs_t.shape[0]
        flat = obs_t.reshape(n_envs * n, d)
        records = {}
        if self.traits.uses_comm:
            if self.traits.uses_drn:
                omega, hidden["drn"] = self.drn(flat, hidden["drn"])
                filt = top_k_filter(omega, self.k)
                records["omega"] = omega.view(n_envs, n, d).numpy()
            else:
                filt = random_filter(d, self.k, rng, (n_envs * n,)).to(self.dtype)
            records["mask"] = (filt > 0).view(n_envs, n, d).numpy()
            messages = build_message(flat, filt).view(n_envs, n, d)
            z, hidden["enc"] = self.nets.encoder(messages, hidden["enc"], self.cfg.include_self)
            records["z"] = z.numpy()
        else:
            z = flat.new_zeros(n_envs, 1, self.z_dim)
        z_agents = z.expand(n_envs, n, self.z_dim) if z.shape[1] == 1 else z
        q, hidden["pol"] = self.nets.policy(flat, z_agents.reshape(n_envs * n, self.z_dim), hidden["pol"])
        q = q.view(n_envs, n, a).numpy()

        avail = np.asarray(avail, dtype=bool)
        masked = np.where(avail, q, -np.inf)
        actions = masked.argmax(axis=-1)
        if epsilon > 0.0:
            u = rng.random((n_envs, n, a))
            u[~avail] = -1.0
            random_actions = u.argmax(axis=-1)
            explore = rng.random((n_envs, n)) < epsilon
            actions = np.where(explore, random_actions, actions)
        return actions.astype(np.int64), hidden, records

    # ------------------------------------------------------------------
    # losses

    def _module(self, name: str, override: dict | None, *args):
        mod = getattr(self.nets, name)
        if override is None:
            return mod(*args)
        prefix = name + "."
        sub = {k[len(prefix):]: v for k, v in override.items() if k.startswith(prefix)}
        return torch.func.functional_call(mod, sub, args)

    def losses(
        self,
        batch: EpisodeBatch,
        theta_override: dict | None = None,
        detach_omega: bool = True,
        mask_seed: int | None = None,
    ) -> LossComponents:
        """Combined loss L_RL + beta * (L_RC + L_INV) over one episode batch.

        Representations are recomputed from stored observations. Per-step terms
        are masked to exact zeros on padding and reduced in float64, so padded
        steps never change the result. With detach_omega the importance weights
        are constants (the regular step); without it the loss is differentiable
        into the importance network (the meta step).
        """
        cfg, traits, spec = self.cfg, self.traits, self.spec
        b, t_plus_1, n, d = batch.obs.shape
        t_max = t_plus_1 - 1
        obs = batch.obs.to(self.dtype)
        states = batch.states.to(self.dtype)
        rewards = batch.rewards.to(self.dtype)
        terminated = batch.terminated.to(self.dtype)
        filled = batch.filled.to(self.dtype)
        actions = batch.actions

        if traits.uses_comm and not traits.uses_drn:
            mask_rng = (
                np.random.default_rng(mask_seed) if mask_seed is not None else self._mask_rng
            )

        pol_h = self.nets.policy.init_hidden(b * n)
        tpol_h = self.target.policy.init_hidden(b * n)
        if traits.uses_comm:
            enc_h = self.nets.encoder.init_hidden(b, cfg.include_self)
            tenc_h = self.target.encoder.init_hidden(b, cfg.include_self)
        if traits.uses_drn:
            drn_h = self.drn.init_hidden(b * n)

        zs = []  # online z per step, [B, cols, z_dim]
        qs = []  # online q per step t < T, [B, n, A]
        target_qs_next = []  # target q per step t >= 1, [B, n, A]
        for t in range(t_max + 1):
            obs_t = obs[:, t]
            flat = obs_t.reshape(b * n, d)
            if traits.uses_comm:
                if traits.uses_drn:
                    omega, drn_h = self.drn(flat, drn_h)
                    weights = omega.detach() if detach_omega else omega
                    filt = top_k_filter(weights, self.k)
                    target_filt = filt.detach()
                else:
                    filt = random_filter(d, self.k, mask_rng, (b * n,)).to(self.dtype)
                    target_filt = filt
                messages = build_message(flat, filt).view(b, n, d)
                z, enc_h = self._module("encoder", theta_override, messages, enc_h, cfg.include_self)
                with torch.no_grad():
                    target_messages = build_message(flat, target_filt).view(b, n, d)
                    tz, tenc_h = self.target.encoder(target_messages, tenc_h, cfg.include_self)
            else:
                z = flat.new_zeros(b, 1, self.z_dim)
                tz = z
            zs.append(z)
            z_agents = z.expand(b, n, self.z_dim) if z.shape[1] == 1 else z
            if t < t_max:
                q, pol_h = self._module(
                    "policy", theta_override, flat, z_agents.reshape(b * n, self.z_dim), pol_h
                )
                qs.append(q.view(b, n, spec.n_actions))
            with torch.no_grad():
                tz_agents = tz.expand(b, n, self.z_dim) if tz.shape[1] == 1 else tz
                tq, tpol_h = self.target.policy(
                    flat, tz_agents.reshape(b * n, self.z_dim), tpol_h
                )
                if t >= 1:
                    target_qs_next.append(tq.view(b, n, spec.n_actions))

        n_filled = filled.double().sum()
        zero = torch.zeros((), dtype=torch.float64)

        # TD loss on the decomposed joint value
        q_all = torch.stack(qs, dim=1)  # [B, T, n, A]
        chosen = q_all.gather(-1, actions.unsqueeze(-1)).squeeze(-1)  # [B, T, n]
        if traits.mixer == "qmix":
            qtot = self._module(
                "mixer",
                theta_override,
                chosen.reshape(b * t_max, n),
                states[:, :t_max].reshape(b * t_max, spec.state_dim),
            ).view(b, t_max)
        else:
            qtot = mix_vdn(chosen)
        with torch.no_grad():
            tq_next = torch.stack(target_qs_next, dim=1)  # [B, T, n, A]
            tmax = tq_next.max(dim=-1).values
            if traits.mixer == "qmix":
                tqtot = self.target.mixer(
                    tmax.reshape(b * t_max, n),
                    states[:, 1:].reshape(b * t_max, spec.state_dim),
                ).view(b, t_max)
            else:
                tqtot = mix_vdn(tmax)
            y = td_targets(rewards, terminated, tqtot, cfg.gamma)
        rl = (((qtot - y) ** 2) * filled).double().sum() / n_filled

        # masked global-state reconstruction
        if traits.uses_comm:
            z_all = torch.stack(zs, dim=1)  # [B, T+1, cols, z_dim]
            predicted = self._module("decoder", theta_override, z_all[:, :t_max])
            err = (predicted - states[:, :t_max].unsqueeze(2)) ** 2
            rc = (err.mean(dim=(2, 3)) * filled).double().sum() / n_filled
        else:
            rc = zero

        # inverse joint-action prediction on consecutive representations
        if traits.uses_inverse:
            logits = self._module("inverse", theta_override, z_all[:, :t_max], z_all[:, 1:])
            if cfg.inverse_loss_kind == "squared":
                probs = torch.softmax(logits, dim=-1)
                one_hot = F.one_hot(actions, spec.n_actions).to(self.dtype).unsqueeze(2)
                per_step = ((probs - one_hot) ** 2).mean(dim=(2, 3, 4))
            else:
                cols = logits.shape[2]
                flat_logits = logits.reshape(-1, spec.n_actions)
                flat_actions = actions.unsqueeze(2).expand(b, t_max, cols, n).reshape(-1)
                ce = F.cross_entropy(flat_logits, flat_actions, reduction="none")
                per_step = ce.view(b, t_max, cols, n).mean(dim=(2, 3))
            inv = (per_step * filled).double().sum() / n_filled
        else:
            inv = zero

        total = rl + cfg.beta * (rc + inv)
        return LossComponents(total=total, rl=rl, reconstruction=rc, inverse=inv)

    # ------------------------------------------------------------------
    # updates

    def regular_update(self, batch: EpisodeBatch, mask_seed: int | None = None) -> dict:
        """One optimizer step on theta with importance weights held constant."""
        comps = self.losses(batch, detach_omega=True, mask_seed=mask_seed)
        if not torch.isfinite(comps.total):
            raise RuntimeError(
                f"non-finite training loss at update {self.update_count}: {comps.as_floats()}"
            )
        self.optimizer.zero_grad(set_to_none=True)
        comps.total.backward()
        grad_norm = nn.utils.clip_grad_norm_(self.nets.parameters(), self.cfg.grad_clip)
        self.optimizer.step()
        self.update_count += 1
        if self.update_count % self.cfg.target_interval == 0:
            self.sync_targets()
        record = comps.as_floats()
        record["grad_norm"] = float(grad_norm)
        return record

    def trial_params(self, batch: EpisodeBatch, lr: float | None = None) -> dict:
        """theta after one differentiable plain-descent step on this batch."""
        theta = dict(self.nets.named_parameters())
        inner = self.losses(batch, theta_override=theta, detach_omega=False).total
        return trial_parameters(inner, theta, self.cfg.lr_theta if lr is None else lr)

    def meta_gradients(self, batch: EpisodeBatch, outer_batch: EpisodeBatch | None = None):
        """Gradients of the trial-parameter loss w.r.t. the importance network.

        The gradient reaches the DRN both through the trial parameters'
        dependence on the importance weights and through their direct
        appearance in the outer loss. `outer_batch` evaluates the outer loss on
        a different batch (fresh-batch mode); by default the batch is reused.
        Returns (gradients aligned with drn.parameters(), inner loss, outer loss).
        """
        if not self.traits.uses_drn:
            raise RuntimeError(f"variant {self.variant!r} has no importance network")
        theta = dict(self.nets.named_parameters())

        def inner_fn(params):
            return self.losses(batch, theta_override=params, detach_omega=False).total

        outer_fn = None
        if outer_batch is not None:
            def outer_fn(params):
                return self.losses(outer_batch, theta_override=params, detach_omega=False).total

        grads, _, inner, outer = meta_gradient(
            inner_fn, theta, list(self.drn.parameters()), self.cfg.lr_theta, outer_fn
        )
        return grads, inner, outer

    def meta_update_drn(self, batch: EpisodeBatch, outer_batch: EpisodeBatch | None = None) -> dict:
        """One importance-network step through the trial parameters."""
        grads, inner, outer = self.meta_gradients(batch, outer_batch)
        self.drn_optimizer.zero_grad(set_to_none=True)
        for p, g in zip(self.drn.parameters(), grads):
            p.grad = g
        self.drn_optimizer.step()
        return {
            "loss_meta_inner": float(inner.detach()),
            "loss_meta_outer": float(outer.detach()),
        }

    def sync_targets(self):
        self.target.sync(self.nets)

    def epsilon_at(self, t: int) -> float:
        return self.cfg.epsilon_at(t)

    # ------------------------------------------------------------------
    # introspection and persistence

    def parameter_counts(self) -> dict:
        """Trainable parameter count per constructed module group."""
        counts = {}
        for name in ("policy", "mixer", "encoder", "decoder", "inverse"):
            mod = getattr(self.nets, name)
            if mod is not None:
                counts[name] = sum(p.numel() for p in mod.parameters())
        if self.drn is not None:
            counts["drn"] = sum(p.numel() for p in self.drn.parameters())
        return counts

    def state_dict(self) -> dict:
        return {
            "variant": self.variant,
            "config": asdict(self.cfg),
            "env_spec": asdict(self.spec),
            "update_count": self.update_count,
            "nets": self.nets.state_dict(),
            "target": self.target.state_dict(),
            "drn": self.drn.state_dict() if self.drn is not None else None,
            "optimizer": self.optimizer.state_dict(),
            "drn_optimizer": self.drn_optimizer.state_dict()
            if self.drn_optimizer is not None
            else None,
            "mask_rng": self._mask_rng.bit_generator.state,
        }

    def load_state_dict(self, state: dict):
        if state["variant"] != self.variant:
            raise ValueError(f"checkpoint variant {state['variant']!r} != {self.variant!r}")
        if state["env_spec"] != asdict(self.spec):
            raise ValueError("checkpoint was trained on a different environment spec")
        self.update_count = state["update_count"]
        self.nets.load_state_dict(state["nets"])
        self.target.load_state_dict(state["target"])
        if self.drn is not None:
            self.drn.load_state_dict(state["drn"])
            self.drn_optimizer.load_state_dict(state["drn_optimizer"])
        self.optimizer.load_state_dict(state["optimizer"])
        self._mask_rng.bit_generator.state = state["mask_rng"]
