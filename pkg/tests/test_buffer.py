import numpy as np
import pytest
import torch

from m2i2.buffer import Episode, EpisodeBatch, EpisodeBuilder, ReplayBuffer


def _episode(length=3, n_agents=2, obs_dim=4, state_dim=5, reward=1.0):
    rng = np.random.default_rng(int(reward * 1000) % 2**31)
    return Episode(
        obs=rng.normal(size=(length + 1, n_agents, obs_dim)),
        states=rng.normal(size=(length + 1, state_dim)),
        actions=rng.integers(0, 3, size=(length, n_agents)),
        rewards=np.full(length, reward),
        terminated=np.eye(length)[length - 1],
    )


# ---------------------------------------------------------------------------
# Episode


def test_episode_validates_alignment():
    with pytest.raises(ValueError):
        Episode(
            obs=np.zeros((3, 2, 4)),
            states=np.zeros((4, 5)),  # one step longer than obs
            actions=np.zeros((3, 2)),
            rewards=np.zeros(3),
            terminated=np.zeros(3),
        )
    with pytest.raises(ValueError):
        Episode(
            obs=np.zeros((1, 2, 4)),
            states=np.zeros((1, 5)),
            actions=np.zeros((0, 2)),  # empty episode
            rewards=np.zeros(0),
            terminated=np.zeros(0),
        )
    with pytest.raises(ValueError):
        Episode(
            obs=np.zeros((4, 3, 4)),  # three agents
            states=np.zeros((4, 5)),
            actions=np.zeros((3, 2)),  # two agents
            rewards=np.zeros(3),
            terminated=np.zeros(3),
        )


def test_builder_round_trip():
    state = np.arange(5.0)
    obs = [np.arange(4.0), np.arange(4.0) + 10]
    builder = EpisodeBuilder(state, obs)
    builder.add([0, 1], reward=0.5, terminated=False, next_state=state + 1, next_obs=obs)
    builder.add([2, 0], reward=1.0, terminated=True, next_state=state + 2, next_obs=obs)
    ep = builder.build()
    assert ep.length == 2
    assert ep.obs.shape == (3, 2, 4)
    assert ep.states.shape == (3, 5)
    assert np.array_equal(ep.actions, [[0, 1], [2, 0]])
    assert np.array_equal(ep.rewards, [0.5, 1.0])
    assert np.array_equal(ep.terminated, [0.0, 1.0])
    assert np.array_equal(ep.states[1], state + 1)


# ---------------------------------------------------------------------------
# ReplayBuffer


def test_buffer_fifo_eviction():
    buf = ReplayBuffer(capacity=5)
    for i in range(7):
        buf.insert(_episode(reward=float(i)))
    assert len(buf) == 5
    assert buf.total_inserted == 7
    assert buf.oldest().rewards[0] == 2.0  # episodes 0 and 1 were evicted


def test_buffer_capacity_is_5000_scale():
    buf = ReplayBuffer(capacity=5000)
    tiny = Episode(
        obs=np.zeros((2, 1, 1)),
        states=np.zeros((2, 1)),
        actions=np.zeros((1, 1)),
        rewards=np.zeros(1),
        terminated=np.ones(1),
    )
    for _ in range(5001):
        buf.insert(tiny)
    assert len(buf) == 5000


def test_buffer_sample_without_replacement():
    buf = ReplayBuffer(capacity=100)
    for i in range(40):
        buf.insert(_episode(reward=float(i)))
    rng = np.random.default_rng(0)
    batch = buf.sample(32, rng)
    assert batch.batch_size == 32
    rewards = {float(batch.rewards[i, 0]) for i in range(32)}
    assert len(rewards) == 32  # all episodes distinct


def test_buffer_sampling_errors():
    buf = ReplayBuffer(capacity=10)
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError):
        buf.sample(1, rng)
    buf.insert(_episode())
    with pytest.raises(ValueError):
        buf.sample(2, rng)
    with pytest.raises(ValueError):
        ReplayBuffer(capacity=0)


def test_buffer_sampling_deterministic_with_seed():
    buf = ReplayBuffer(capacity=50)
    for i in range(20):
        buf.insert(_episode(reward=float(i)))
    b1 = buf.sample(8, np.random.default_rng(7))
    b2 = buf.sample(8, np.random.default_rng(7))
    assert torch.equal(b1.rewards, b2.rewards)
    assert torch.equal(b1.obs, b2.obs)


# ---------------------------------------------------------------------------
# EpisodeBatch


def test_batch_pads_to_longest():
    batch = EpisodeBatch.from_episodes([_episode(length=2), _episode(length=4)])
    assert batch.max_steps == 4
    assert batch.obs.shape[1] == 5
    assert torch.equal(batch.filled, torch.tensor([[1.0, 1.0, 0.0, 0.0], [1.0, 1.0, 1.0, 1.0]]))
    # padding regions are zero
    assert torch.equal(batch.rewards[0, 2:], torch.zeros(2))
    assert torch.equal(batch.obs[0, 3:], torch.zeros(2, 2, 4))


def test_batch_pad_to_and_padded():
    batch = EpisodeBatch.from_episodes([_episode(length=3)], pad_to=6)
    assert batch.max_steps == 6
    assert batch.filled.sum() == 3
    longer = batch.padded(4)
    assert longer.max_steps == 10
    assert torch.equal(longer.filled[:, :6], batch.filled)
    assert longer.filled[:, 6:].sum() == 0
    assert torch.equal(longer.obs[:, :7], batch.obs)
    with pytest.raises(ValueError):
        batch.padded(-1)


def test_batch_rejects_empty():
    with pytest.raises(ValueError):
        EpisodeBatch.from_episodes([])
