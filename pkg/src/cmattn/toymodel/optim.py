"""Adam optimizer over a flat parameter dict, functional style."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..tensor_ops import ContractError, Tensor

__all__ = ["AdamState", "adam_step"]


@dataclass
class AdamState:
    """First/second moment accumulators, one pair per parameter name."""

    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]

    @classmethod
    def zeros_like(cls, params: dict[str, Tensor]) -> "AdamState":
        return cls(
            m={k: np.zeros(p.shape) for k, p in params.items()},
            v={k: np.zeros(p.shape) for k, p in params.items()},
        )


def adam_step(
    params: dict[str, Tensor],
    grads: dict[str, np.ndarray],
    state: AdamState,
    t: int,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> dict[str, Tensor]:
    """One bias-corrected Adam update; mutates ``state``, returns new parameters."""
    if t < 1:
        raise ContractError("adam_step: step counter starts at 1")
    out: dict[str, Tensor] = {}
    for name, p in params.items():
        g = grads[name]
        m = state.m[name] = beta1 * state.m[name] + (1.0 - beta1) * g
        v = state.v[name] = beta2 * state.v[name] + (1.0 - beta2) * g * g
        m_hat = m / (1.0 - beta1**t)
        v_hat = v / (1.0 - beta2**t)
        out[name] = Tensor._wrap(p.data - lr * m_hat / (np.sqrt(v_hat) + eps))
    return out
