"""Decoupled-weight-decay Adam over named parameter tensors.

The decay is applied multiplicatively, w <- w * (1 - lr * wd), before
the bias-corrected Adam delta. Written against plain name->tensor dicts
so optimizer state can be checkpointed alongside model tensors.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import torch

from .errors import InvalidInputError, NumericError


@dataclass
class AdamWConfig:
    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01


@dataclass
class AdamWState:
    step: int = 0
    m: dict[str, torch.Tensor] = field(default_factory=dict)
    v: dict[str, torch.Tensor] = field(default_factory=dict)

    @classmethod
    def for_params(cls, params: dict[str, torch.Tensor]) -> "AdamWState":
        return cls(
            step=0,
            m={k: torch.zeros_like(p) for k, p in params.items()},
            v={k: torch.zeros_like(p) for k, p in params.items()},
        )


@torch.no_grad()
def adamw_step(
    params: dict[str, torch.Tensor],
    grads: dict[str, torch.Tensor],
    state: AdamWState,
    config: AdamWConfig,
) -> tuple[dict[str, torch.Tensor], AdamWState]:
    """One optimizer step, updating params and state in place.

    Fails fast (naming the tensor) on non-finite gradients or on a
    shape mismatch between a gradient and its parameter.
    """
    if set(params) != set(grads):
        raise InvalidInputError(
            f"parameter/gradient name mismatch: {sorted(set(params) ^ set(grads))}"
        )
    for name, g in grads.items():
        if g.shape != params[name].shape:
            raise InvalidInputError(f"gradient shape mismatch for {name}")
        if not torch.isfinite(g).all():
            raise NumericError(f"non-finite gradient in {name}")

    t = state.step + 1
    bc1 = 1.0 - config.beta1 ** t
    bc2 = 1.0 - config.beta2 ** t
    for name, p in params.items():
        g = grads[name]
        if config.weight_decay:
            p.mul_(1.0 - config.lr * config.weight_decay)
        m = state.m[name]
        v = state.v[name]
        m.mul_(config.beta1).add_(g, alpha=1.0 - config.beta1)
        v.mul_(config.beta2).addcmul_(g, g, value=1.0 - config.beta2)
        p.addcdiv_(m / bc1, (v / bc2).sqrt_().add_(config.eps), value=-config.lr)
    state.step = t
    return params, state
