"""Differentiable one-step lookahead and second-derivative meta-gradients."""

from __future__ import annotations

from typing import Callable, Iterable, Mapping

import torch

LossFn = Callable[[Mapping[str, torch.Tensor]], torch.Tensor]


def trial_parameters(
    loss: torch.Tensor, params: Mapping[str, torch.Tensor], lr: float
) -> dict[str, torch.Tensor]:
    """One plain gradient-descent step, kept differentiable.

    Returns {name: p - lr * dloss/dp}. The gradient graph is retained
    (create_graph), so the result is a differentiable function of everything
    the loss depends on. Parameters unused by the loss pass through unchanged.
    """
    names = list(params.keys())
    values = [params[name] for name in names]
    grads = torch.autograd.grad(loss, values, create_graph=True, allow_unused=True)
    trial = {}
    for name, p, g in zip(names, values, grads):
        trial[name] = p if g is None else p - lr * g
    return trial


def meta_gradient(
    loss_fn: LossFn,
    params: Mapping[str, torch.Tensor],
    meta_params: Iterable[torch.Tensor],
    lr: float,
    outer_loss_fn: LossFn | None = None,
):
    """Gradient of loss_fn(params - lr * grad(loss_fn(params))) w.r.t. meta_params.

    loss_fn maps a name->tensor parameter dict to a scalar; meta_params enter
    through its closure. The returned gradients combine the path through the
    trial parameters (second derivative) and any direct appearance of
    meta_params in the outer loss. `outer_loss_fn` defaults to loss_fn
    (same-batch inner and outer evaluation).

    Returns (meta_grads, trial, inner_loss, outer_loss).
    """
    meta_params = list(meta_params)
    inner = loss_fn(params)
    if not torch.isfinite(inner):
        raise RuntimeError(f"non-finite inner loss {inner.item()!r} in meta step")
    trial = trial_parameters(inner, params, lr)
    outer = (outer_loss_fn or loss_fn)(trial)
    if not torch.isfinite(outer):
        raise RuntimeError(f"non-finite outer loss {outer.item()!r} in meta step")
    meta_grads = torch.autograd.grad(outer, meta_params, allow_unused=True)
    meta_grads = [
        torch.zeros_like(p) if g is None else g for p, g in zip(meta_params, meta_grads)
    ]
    return meta_grads, trial, inner, outer
