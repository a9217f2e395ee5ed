import numpy as np
import pytest
import torch

from m2i2.models import (
    InverseModel,
    PolicyNet,
    QmixMixer,
    StateDecoder,
    mix_vdn,
    predict_joint_action,
    select_action,
)


def _zero_params(module):
    with torch.no_grad():
        for p in module.parameters():
            p.zero_()


# ---------------------------------------------------------------------------
# PolicyNet


def test_policy_output_width_and_determinism():
    torch.manual_seed(0)
    net = PolicyNet(obs_dim=7, z_dim=16, n_actions=3)
    obs, z, h = torch.randn(4, 7), torch.randn(4, 16), net.init_hidden(4)
    q1, h1 = net(obs, z, h)
    q2, h2 = net(obs, z, h)
    assert q1.shape == (4, 3)
    assert torch.equal(q1, q2) and torch.equal(h1, h2)


def test_policy_zero_params_zero_q():
    net = PolicyNet(obs_dim=5, z_dim=8, n_actions=4)
    _zero_params(net)
    q, _ = net(torch.randn(2, 5), torch.randn(2, 8), net.init_hidden(2))
    assert torch.equal(q, torch.zeros(2, 4))


def test_policy_rejects_wrong_widths():
    net = PolicyNet(obs_dim=5, z_dim=8, n_actions=4)
    with pytest.raises(ValueError):
        net(torch.randn(2, 6), torch.randn(2, 8), net.init_hidden(2))
    with pytest.raises(ValueError):
        net(torch.randn(2, 5), torch.randn(2, 9), net.init_hidden(2))


# ---------------------------------------------------------------------------
# select_action


def test_select_action_greedy_argmax():
    rng = np.random.default_rng(0)
    assert select_action([1.0, 3.0, 2.0], [True, True, True], 0.0, rng) == 1


def test_select_action_respects_availability():
    rng = np.random.default_rng(1)
    assert select_action([9.0, 1.0, 8.0], [False, True, False], 0.0, rng) == 1


def test_select_action_tie_breaks_low_index():
    rng = np.random.default_rng(2)
    assert select_action([2.0, 2.0, 1.0], [True, True, True], 0.0, rng) == 0
    assert select_action(torch.tensor([0.0, 0.0, 0.0]), [True, True, True], 0.0, rng) == 0


def test_select_action_uniform_at_full_epsilon():
    from scipy.stats import chisquare

    rng = np.random.default_rng(3)
    avail = [True, True, False, True]
    counts = np.zeros(4, dtype=np.int64)
    for _ in range(10000):
        counts[select_action([5.0, 1.0, 2.0, 0.0], avail, 1.0, rng)] += 1
    assert counts[2] == 0
    assert chisquare(counts[[0, 1, 3]]).pvalue > 1e-4


def test_select_action_errors():
    rng = np.random.default_rng(4)
    with pytest.raises(ValueError):
        select_action([1.0, 2.0], [False, False], 0.0, rng)
    with pytest.raises(ValueError):
        select_action([1.0, 2.0], [True, True], 1.5, rng)
    with pytest.raises(ValueError):
        select_action([1.0, 2.0, 3.0], [True, True], 0.0, rng)


# ---------------------------------------------------------------------------
# StateDecoder


def test_decoder_shapes_and_zero_params():
    torch.manual_seed(5)
    dec = StateDecoder(z_dim=16, state_dim=9)
    out = dec(torch.randn(6, 16))
    assert out.shape == (6, 9)
    _zero_params(dec)
    assert torch.equal(dec(torch.randn(3, 16)), torch.zeros(3, 9))
    with pytest.raises(ValueError):
        dec(torch.randn(3, 15))


def test_decoder_overfits_fixed_pairs():
    torch.manual_seed(6)
    dec = StateDecoder(z_dim=16, state_dim=6)
    z = torch.randn(64, 16)
    s = torch.randn(64, 6)
    opt = torch.optim.Adam(dec.parameters(), lr=5e-3)
    for _ in range(2000):
        opt.zero_grad()
        loss = ((dec(z) - s) ** 2).mean()
        loss.backward()
        opt.step()
    per_pair = ((dec(z) - s) ** 2).mean(dim=1)
    assert per_pair.max() < 1e-2


# ---------------------------------------------------------------------------
# InverseModel


def test_inverse_rows_are_distributions():
    torch.manual_seed(7)
    model = InverseModel(z_dim=16, n_agents=3, n_actions=4)
    for _ in range(10):
        probs = predict_joint_action(model, torch.randn(5, 16), torch.randn(5, 16))
        assert probs.shape == (5, 3, 4)
        assert (probs >= 0).all()
        assert (probs.sum(dim=-1) - 1.0).abs().max() <= 1e-6


def test_inverse_rejects_mismatched_pairs():
    model = InverseModel(z_dim=16, n_agents=3, n_actions=4)
    with pytest.raises(ValueError):
        model(torch.randn(2, 16), torch.randn(3, 16))
    with pytest.raises(ValueError):
        model(torch.randn(2, 15), torch.randn(2, 15))


def test_inverse_overfits_fixed_triplets():
    torch.manual_seed(8)
    n_agents, n_actions = 3, 3
    model = InverseModel(z_dim=16, n_agents=n_agents, n_actions=n_actions)
    z_t = torch.randn(64, 16)
    z_t1 = torch.randn(64, 16)
    actions = torch.randint(0, n_actions, (64, n_agents))
    one_hot = torch.nn.functional.one_hot(actions, n_actions).float()
    opt = torch.optim.Adam(model.parameters(), lr=5e-3)
    for _ in range(2000):
        opt.zero_grad()
        probs = torch.softmax(model(z_t, z_t1), dim=-1)
        loss = ((probs - one_hot) ** 2).mean()
        loss.backward()
        opt.step()
    predicted = predict_joint_action(model, z_t, z_t1).argmax(dim=-1)
    accuracy = (predicted == actions).float().mean()
    assert accuracy >= 0.95


# ---------------------------------------------------------------------------
# QmixMixer


def test_qmix_monotone_in_agent_qs():
    torch.manual_seed(9)
    draws = 0
    for trial in range(50):
        mixer = QmixMixer(n_agents=3, state_dim=6)
        for _ in range(20):
            qs = torch.randn(1, 3)
            state = torch.randn(1, 6)
            base = mixer(qs, state)
            for i in range(3):
                bumped = qs.clone()
                bumped[0, i] += 0.1
                assert mixer(bumped, state) - base >= -1e-8
            draws += 1
    assert draws == 1000


def test_qmix_zero_hypernet_constant():
    mixer = QmixMixer(n_agents=4, state_dim=5)
    _zero_params(mixer)
    state = torch.randn(2, 5)
    out1 = mixer(torch.randn(2, 4), state)
    out2 = mixer(torch.randn(2, 4) * 100, state)
    assert torch.equal(out1, out2)


def test_qmix_single_agent_affine():
    # identity-like weights: unit first-layer weights with a bias shift that
    # keeps the ELU in its linear region, unit second-layer weights
    mixer = QmixMixer(n_agents=1, state_dim=4)
    _zero_params(mixer)
    with torch.no_grad():
        mixer.hyper_w1.bias.fill_(1.0)
        mixer.hyper_b1.bias.fill_(10.0)
        mixer.hyper_w2.bias.fill_(1.0)
    state = torch.randn(1, 4)
    q = torch.linspace(2.0, 6.0, 5).unsqueeze(1)
    out = torch.stack([mixer(q[i : i + 1], state) for i in range(5)]).flatten()
    diffs = out[1:] - out[:-1]
    assert (diffs - diffs[0]).abs().max() < 1e-5
    assert (diffs > 0).all()


def test_qmix_shape_validation():
    mixer = QmixMixer(n_agents=3, state_dim=6)
    with pytest.raises(ValueError):
        mixer(torch.randn(2, 4), torch.randn(2, 6))
    with pytest.raises(ValueError):
        mixer(torch.randn(2, 3), torch.randn(2, 5))


# ---------------------------------------------------------------------------
# mix_vdn


def test_vdn_examples():
    assert mix_vdn(torch.tensor([1.0, 2.0, 3.0])) == 6.0
    assert mix_vdn(torch.zeros(4)) == 0.0
    assert mix_vdn(torch.tensor([[5.0]])) == torch.tensor([5.0])
    batched = mix_vdn(torch.tensor([[1.0, 2.0], [3.0, 4.0]]))
    assert torch.equal(batched, torch.tensor([3.0, 7.0]))
    with pytest.raises(ValueError):
        mix_vdn(torch.zeros(0))


# ---------------------------------------------------------------------------
# gradient correctness


def test_forward_gradients_match_finite_differences():
    torch.manual_seed(11)

    policy = PolicyNet(obs_dim=3, z_dim=4, n_actions=2).double()
    obs = torch.randn(2, 3, dtype=torch.float64, requires_grad=True)
    z = torch.randn(2, 4, dtype=torch.float64, requires_grad=True)
    h = torch.randn(2, 32, dtype=torch.float64, requires_grad=True)
    assert torch.autograd.gradcheck(lambda o, zz, hh: policy(o, zz, hh)[0], (obs, z, h))

    dec = StateDecoder(z_dim=4, state_dim=3).double()
    zin = torch.randn(2, 4, dtype=torch.float64, requires_grad=True)
    assert torch.autograd.gradcheck(dec, (zin,))

    inv = InverseModel(z_dim=4, n_agents=2, n_actions=3).double()
    za = torch.randn(2, 4, dtype=torch.float64, requires_grad=True)
    zb = torch.randn(2, 4, dtype=torch.float64, requires_grad=True)
    assert torch.autograd.gradcheck(inv, (za, zb))

    mixer = QmixMixer(n_agents=2, state_dim=3).double()
    qs = torch.randn(2, 2, dtype=torch.float64, requires_grad=True)
    st = torch.randn(2, 3, dtype=torch.float64, requires_grad=True)
    assert torch.autograd.gradcheck(mixer, (qs, st))
