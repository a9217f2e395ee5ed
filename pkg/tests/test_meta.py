import numpy as np
import pytest
import torch

from m2i2.meta import meta_gradient, trial_parameters


def test_trial_step_definition():
    theta = {"w": torch.tensor(1.0, requires_grad=True)}
    loss = 0.5 * theta["w"]  # gradient 0.5
    trial = trial_parameters(loss, theta, lr=0.1)
    assert torch.allclose(trial["w"], torch.tensor(0.95))


def test_trial_zero_lr_is_identity():
    theta = {"w": torch.tensor(3.0, requires_grad=True)}
    loss = theta["w"] ** 2
    trial = trial_parameters(loss, theta, lr=0.0)
    assert torch.equal(trial["w"], theta["w"])


def test_trial_unused_parameter_passes_through():
    theta = {
        "used": torch.tensor(2.0, requires_grad=True),
        "unused": torch.tensor(5.0, requires_grad=True),
    }
    trial = trial_parameters(theta["used"] ** 2, theta, lr=0.1)
    assert trial["unused"] is theta["unused"]
    assert torch.allclose(trial["used"], torch.tensor(2.0 - 0.1 * 4.0))


def test_analytic_toy_meta_gradient():
    # L(theta, phi) = 0.5 * (theta - phi)^2 at theta=2, phi=1, lr=0.1:
    # d/dphi L(theta - lr*(theta - phi), phi) = -(1 - lr)^2 (theta - phi) = -0.81
    theta = {"t": torch.tensor(2.0, dtype=torch.float64, requires_grad=True)}
    phi = torch.tensor(1.0, dtype=torch.float64, requires_grad=True)

    def loss_fn(params):
        return 0.5 * (params["t"] - phi) ** 2

    grads, trial, inner, outer = meta_gradient(loss_fn, theta, [phi], lr=0.1)
    assert abs(float(trial["t"].detach()) - 1.9) < 1e-12
    assert abs(float(grads[0]) - (-0.81)) < 1e-8
    assert abs(float(inner.detach()) - 0.5) < 1e-12
    assert abs(float(outer.detach()) - 0.5 * 0.81) < 1e-12


def test_zero_lookahead_reduces_to_direct_gradient():
    theta = {"t": torch.tensor(2.0, dtype=torch.float64, requires_grad=True)}
    phi = torch.tensor(1.0, dtype=torch.float64, requires_grad=True)

    def loss_fn(params):
        return 0.5 * (params["t"] - phi) ** 2

    grads, _, _, _ = meta_gradient(loss_fn, theta, [phi], lr=0.0)
    direct = torch.autograd.grad(loss_fn(theta), phi)[0]
    assert torch.allclose(grads[0], direct)
    assert abs(float(grads[0]) - (-1.0)) < 1e-12


def test_unused_meta_parameter_gets_zero_gradient():
    theta = {"t": torch.tensor(1.0, requires_grad=True)}
    phi_used = torch.tensor(0.5, requires_grad=True)
    phi_unused = torch.tensor(4.0, requires_grad=True)

    def loss_fn(params):
        return (params["t"] * phi_used) ** 2

    grads, _, _, _ = meta_gradient(loss_fn, theta, [phi_used, phi_unused], lr=0.01)
    assert torch.equal(grads[1], torch.zeros(()))
    assert grads[0].abs() > 0


def test_non_finite_losses_raise():
    theta = {"t": torch.tensor(float("nan"), requires_grad=True)}
    phi = torch.tensor(1.0, requires_grad=True)
    with pytest.raises(RuntimeError):
        meta_gradient(lambda p: p["t"] * phi, theta, [phi], lr=0.1)


def _composed_outer_value(loss_fn, theta_vals, phi_vec, lr):
    """phi -> L(theta - lr * grad_theta L(theta, phi), phi) without autograd on phi."""
    theta = {k: v.clone().requires_grad_(True) for k, v in theta_vals.items()}
    inner = loss_fn(theta, phi_vec)
    grads = torch.autograd.grad(inner, list(theta.values()))
    trial = {k: v - lr * g for (k, v), g in zip(theta.items(), grads)}
    return float(loss_fn(trial, phi_vec).detach())


def test_meta_gradient_matches_finite_differences_on_tiny_networks():
    rng = np.random.default_rng(123)
    for instance in range(20):
        n_in, n_hidden = int(rng.integers(2, 4)), int(rng.integers(2, 4))
        w1 = torch.tensor(rng.normal(size=(n_hidden, n_in)), requires_grad=True)
        w2 = torch.tensor(rng.normal(size=(1, n_hidden)), requires_grad=True)
        phi = torch.tensor(rng.normal(size=n_in), requires_grad=True)
        x = torch.tensor(rng.normal(size=(5, n_in)))
        y = torch.tensor(rng.normal(size=(5, 1)))
        n_params = w1.numel() + w2.numel() + phi.numel()
        assert n_params <= 50
        theta = {"w1": w1, "w2": w2}
        lr = 0.05

        def loss_fn_with(params, phi_vec):
            gate = torch.sigmoid(phi_vec)
            h = torch.tanh((x * gate) @ params["w1"].T)
            return ((h @ params["w2"].T - y) ** 2).mean()

        grads, _, _, _ = meta_gradient(lambda p: loss_fn_with(p, phi), theta, [phi], lr=lr)

        h = 1e-6
        for j in range(phi.numel()):
            phi_plus = phi.detach().clone()
            phi_plus[j] += h
            phi_minus = phi.detach().clone()
            phi_minus[j] -= h
            fd = (
                _composed_outer_value(loss_fn_with, theta, phi_plus, lr)
                - _composed_outer_value(loss_fn_with, theta, phi_minus, lr)
            ) / (2 * h)
            got = float(grads[0][j])
            denom = max(abs(fd), abs(got), 1e-8)
            assert abs(got - fd) / denom <= 1e-4, (instance, j, got, fd)
