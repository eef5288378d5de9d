"""AdamW with decoupled weight decay and a linear warmup/decay schedule."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DivergenceError
from .tensor import Tensor

BETA1 = 0.9
BETA2 = 0.999
EPS = 1e-8


@dataclass
class OptimizerState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0
    beta1: float = BETA1
    beta2: float = BETA2
    eps: float = EPS

    @classmethod
    def for_params(cls, params: dict[str, Tensor]) -> "OptimizerState":
        return cls(
            m={k: np.zeros_like(p.data) for k, p in params.items()},
            v={k: np.zeros_like(p.data) for k, p in params.items()},
        )


def lr_at(step: int, warmup_steps: int, max_steps: int, lr_peak: float) -> float:
    """Linear ramp 0 -> lr_peak over warmup_steps, then linear decay to 0 at max_steps."""
    if step < 0:
        raise ValueError("step must be nonnegative")
    if warmup_steps > 0 and step <= warmup_steps:
        return lr_peak * step / warmup_steps
    if step >= max_steps or max_steps <= warmup_steps:
        return 0.0
    return lr_peak * (max_steps - step) / (max_steps - warmup_steps)


def decays(name: str, p: Tensor) -> bool:
    """Weight decay applies to matrices only; biases and layer-norm params are exempt."""
    return p.ndim >= 2


def adamw_step(
    params: dict[str, Tensor],
    state: OptimizerState,
    lr: float,
    weight_decay: float,
) -> None:
    """One decoupled-weight-decay Adam update with bias correction.

    Parameters without a gradient this step are treated as zero-gradient
    (they still decay). Updates happen in place on each tensor's data.
    """
    state.step += 1
    t = state.step
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t
    for name, p in params.items():
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        if not np.all(np.isfinite(g)):
            raise DivergenceError(f"non-finite gradient for parameter {name!r}")
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        update = (m / bc1) / (np.sqrt(v / bc2) + state.eps)
        if weight_decay and decays(name, p):
            update = update + weight_decay * p.data
        p.data -= (lr * update).astype(p.data.dtype, copy=False)


def clip_grad_norm(params: dict[str, Tensor], max_norm: float) -> float:
    """Scale all gradients so their global L2 norm is at most max_norm."""
    total = 0.0
    for p in params.values():
        if p.grad is not None:
            total += float((p.grad.astype(np.float64) ** 2).sum())
    norm = float(np.sqrt(total))
    if norm > max_norm and norm > 0:
        scale = max_norm / norm
        for p in params.values():
            if p.grad is not None:
                p.grad *= scale
    return norm
