"""Training and evaluation loops.

The training loop rolls out `run.batch_size_run` environment instances in
lockstep, inserts completed episodes into the replay buffer, and performs
`run.updates_per_episode` train iterations per collected episode (each
iteration is one regular update plus, for importance-learning variants, one
meta update on the same batch). Greedy evaluation runs every
`run.eval_interval` env steps and appends one record to the metrics stream.

Everything is single-threaded; (config, seed) fully determines the stream.
"""

from __future__ import annotations

import json
import math
import time
from pathlib import Path

import numpy as np
import torch

from ..buffer import EpisodeBuilder, ReplayBuffer
from ..envs import make_env
from ..learner import M2I2Learner
from .config import RunConfig, format_flat_config, load_config, resolve_env_config, resolve_run_dir
from .metrics import MetricsRecord, append_record, read_metrics

CONFIG_FILENAME = "config.txt"
CHECKPOINT_FILENAME = "checkpoint.pt"
MANIFEST_FILENAME = "manifest.json"
SUMMARY_FILENAME = "summary.json"
EVAL_RECORDS_FILENAME = "comm_records.npz"
TRAIN_RECORDS_FILENAME = "comm_records_train.npz"

# rng stream tags so the acting, sampling, and evaluation streams never alias
_ACT_STREAM, _SAMPLE_STREAM, _EVAL_STREAM = 1, 2, 3


def _build_env(config: RunConfig):
    return make_env(config.env_kind, resolve_env_config(config.env_kind, config.env_config))


class _LossAverager:
    """Mean loss components over the updates since the last metrics record."""

    def __init__(self):
        self.reset()

    def reset(self):
        self._sums: dict = {}
        self._count = 0

    def add(self, record: dict):
        for key, value in record.items():
            self._sums[key] = self._sums.get(key, 0.0) + value
        self._count += 1

    def mean(self, key: str) -> float | None:
        if self._count == 0 or key not in self._sums:
            return None
        return self._sums[key] / self._count


def _collect_round(envs, learner, rng, epsilon_fn, base_steps, capture=False):
    """Roll every environment once from reset to termination, in lockstep.

    Returns (episodes, live env steps taken, per-episode comm records or None).
    """
    n_envs = len(envs)
    spec = envs[0].spec()
    reset_seeds = rng.integers(0, 2**31 - 1, size=n_envs)
    builders = []
    obs_list = []
    for env, reset_seed in zip(envs, reset_seeds):
        state, obs = env.reset(seed=int(reset_seed))
        builders.append(EpisodeBuilder(state, obs))
        obs_list.append(obs)
    done = np.zeros(n_envs, dtype=bool)
    hidden = learner.init_hidden(n_envs)
    all_avail = np.ones((spec.n_agents, spec.n_actions), dtype=bool)
    steps = 0
    step_records = [] if capture else None
    while not done.all():
        obs_arr = np.stack(obs_list)
        avail = np.stack([all_avail if done[i] else envs[i].avail_all() for i in range(n_envs)])
        actions, hidden, rec = learner.act_step(
            obs_arr, hidden, avail, epsilon_fn(base_steps + steps), rng
        )
        if capture:
            step_records.append(rec)
        for i, env in enumerate(envs):
            if done[i]:
                continue
            result = env.step(actions[i])
            builders[i].add(
                actions[i], result.reward, result.terminated, result.next_state, result.next_obs
            )
            obs_list[i] = result.next_obs
            steps += 1
            if result.terminated:
                done[i] = True
    episodes = [b.build() for b in builders]
    captured = None
    if capture and step_records and step_records[0]:
        captured = [
            {
                key: np.stack([step_records[t][key][i] for t in range(ep.length)])
                for key in step_records[0]
            }
            for i, ep in enumerate(episodes)
        ]
    return episodes, steps, captured


def evaluate_policy(learner, env, episodes: int, seed: int, capture=False):
    """Greedy (epsilon=0) evaluation over full episodes.

    Returns (summary dict with win_rate / mean_return / return_se, per-episode
    comm records or None).
    """
    if episodes < 1:
        raise ValueError("evaluation needs at least one episode")
    spec = env.spec()
    seed_rng = np.random.default_rng(np.random.SeedSequence([seed, _EVAL_STREAM, 0]))
    act_rng = np.random.default_rng(np.random.SeedSequence([seed, _EVAL_STREAM, 1]))
    reset_seeds = seed_rng.integers(0, 2**31 - 1, size=episodes)
    returns = np.zeros(episodes)
    wins = 0
    captured = [] if capture else None
    for e in range(episodes):
        _, obs = env.reset(seed=int(reset_seeds[e]))
        hidden = learner.init_hidden(1)
        step_records = []
        terminated = False
        while not terminated:
            avail = env.avail_all()[None]
            actions, hidden, rec = learner.act_step(
                np.asarray(obs)[None], hidden, avail, 0.0, act_rng
            )
            result = env.step(actions[0])
            if capture and rec:
                step_records.append(rec)
            returns[e] += result.reward
            obs = result.next_obs
            terminated = result.terminated
        wins += bool(result.won)
        if capture and step_records:
            captured.append(
                {key: np.stack([r[key][0] for r in step_records]) for key in step_records[0]}
            )
    summary = {
        "episodes": episodes,
        "win_rate": wins / episodes,
        "mean_return": float(returns.mean()),
        "return_se": float(returns.std(ddof=1) / math.sqrt(episodes)) if episodes > 1 else 0.0,
    }
    return summary, captured


def _save_comm_records(path: Path, captured: list[dict]):
    """Flatten per-episode comm records into labeled step arrays."""
    lengths = [next(iter(ep.values())).shape[0] for ep in captured]
    arrays = {
        "episode": np.concatenate([np.full(n, e, dtype=np.int64) for e, n in enumerate(lengths)]),
        "t": np.concatenate([np.arange(n, dtype=np.int64) for n in lengths]),
        "length": np.concatenate([np.full(n, n, dtype=np.int64) for n in lengths]),
    }
    for key in captured[0]:
        arrays[key] = np.concatenate([ep[key] for ep in captured], axis=0)
    np.savez_compressed(path, **arrays)


def _save_checkpoint(run_dir: Path, learner: M2I2Learner, config: RunConfig, env_steps: int):
    torch.save(learner.state_dict(), run_dir / CHECKPOINT_FILENAME)
    manifest = {
        "format_version": 1,
        "variant": config.variant,
        "env_kind": config.env_kind,
        "env_config": {k: _jsonable(v) for k, v in config.env_config.items()},
        "env_steps": env_steps,
        "update_count": learner.update_count,
        "config_hash": config.config_hash(),
        "checkpoint": CHECKPOINT_FILENAME,
    }
    (run_dir / MANIFEST_FILENAME).write_text(json.dumps(manifest, indent=2, sort_keys=True))


def _jsonable(value):
    if isinstance(value, tuple):
        return [_jsonable(v) for v in value]
    return value


def train(config: RunConfig) -> Path:
    """Run the full training loop; returns the run directory."""
    torch.set_num_threads(1)
    run_dir = resolve_run_dir(config)
    (run_dir / CONFIG_FILENAME).write_text(format_flat_config(config.to_flat()))

    envs = [_build_env(config) for _ in range(config.batch_size_run)]
    eval_env = _build_env(config)
    spec = envs[0].spec()
    learner = M2I2Learner(spec, config.learner, config.variant, seed=config.seed)
    buffer = ReplayBuffer(config.learner.buffer_capacity)
    act_rng = np.random.default_rng(np.random.SeedSequence([config.seed, _ACT_STREAM]))
    sample_rng = np.random.default_rng(np.random.SeedSequence([config.seed, _SAMPLE_STREAM]))
    averager = _LossAverager()
    capture_any = config.record_comm != "off" and learner.traits.uses_comm

    start = time.perf_counter()
    env_steps = 0
    update_credit = 0.0
    next_eval = 0
    eval_index = 0
    capture_next_round = False
    stopped_early = False

    def eval_point() -> bool:
        nonlocal eval_index, capture_next_round
        summary, captured = evaluate_policy(
            learner, eval_env, config.eval_episodes, seed=config.seed + 7919 * eval_index,
            capture=capture_any,
        )
        record = MetricsRecord(
            env_steps=env_steps,
            test_win_rate=summary["win_rate"],
            test_mean_return=summary["mean_return"],
            test_return_se=summary["return_se"],
            epsilon=learner.epsilon_at(min(env_steps, config.total_steps)),
            comm_frequency=learner.comm_frequency,
            wall_clock=time.perf_counter() - start,
            loss=averager.mean("loss"),
            loss_rl=averager.mean("loss_rl"),
            loss_rc=averager.mean("loss_rc"),
            loss_inv=averager.mean("loss_inv"),
        )
        append_record(run_dir, record)
        averager.reset()
        if captured:
            _save_comm_records(run_dir / EVAL_RECORDS_FILENAME, captured)
        if config.record_comm == "train":
            capture_next_round = True
        eval_index += 1
        return config.stop_win_rate is not None and summary["win_rate"] >= config.stop_win_rate

    while env_steps < config.total_steps:
        if env_steps >= eval_index * config.eval_interval:
            if eval_point():
                stopped_early = True
                break
        episodes, steps, captured = _collect_round(
            envs, learner, act_rng, learner.epsilon_at, env_steps, capture=capture_next_round
        )
        if captured:
            _save_comm_records(run_dir / TRAIN_RECORDS_FILENAME, captured)
            capture_next_round = False
        env_steps += steps
        for episode in episodes:
            buffer.insert(episode)
        update_credit += len(episodes) * config.updates_per_episode
        while update_credit >= 1.0 and buffer.can_sample(config.learner.batch_size):
            batch = buffer.sample(config.learner.batch_size, sample_rng)
            averager.add(learner.regular_update(batch))
            if learner.traits.uses_drn:
                meta_batch = (
                    buffer.sample(config.learner.batch_size, sample_rng)
                    if config.learner.meta_fresh_batch
                    else batch
                )
                learner.meta_update_drn(meta_batch)
            update_credit -= 1.0
        if config.checkpoint_interval and env_steps // config.checkpoint_interval > (
            (env_steps - steps) // config.checkpoint_interval
        ):
            _save_checkpoint(run_dir, learner, config, env_steps)

    if not stopped_early:
        eval_point()
    _save_checkpoint(run_dir, learner, config, env_steps)

    final = read_metrics(run_dir)[-1]
    summary = {
        "env_steps": env_steps,
        "updates": learner.update_count,
        "wall_clock": time.perf_counter() - start,
        "stopped_early": stopped_early,
        "config_hash": config.config_hash(),
        "final": json.loads(final.to_json()),
    }
    (run_dir / SUMMARY_FILENAME).write_text(json.dumps(summary, indent=2, sort_keys=True))
    return run_dir


def evaluate_checkpoint(run_dir: str | Path, episodes: int, seed: int) -> dict:
    """Greedy evaluation of a saved run's checkpoint."""
    run_dir = Path(run_dir)
    manifest = json.loads((run_dir / MANIFEST_FILENAME).read_text())
    config = load_config(run_dir / CONFIG_FILENAME)
    if manifest["variant"] != config.variant:
        raise ValueError("manifest/config variant mismatch in run directory")
    env = _build_env(config)
    learner = M2I2Learner(env.spec(), config.learner, config.variant, seed=config.seed)
    state = torch.load(run_dir / manifest["checkpoint"], weights_only=False)
    learner.load_state_dict(state)
    summary, _ = evaluate_policy(learner, env, episodes, seed)
    summary["env_steps"] = manifest["env_steps"]
    summary["variant"] = config.variant
    return summary
