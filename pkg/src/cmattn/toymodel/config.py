"""Training configuration and the ablation variant lattice."""

from __future__ import annotations

from dataclasses import dataclass

from ..tensor_ops import ContractError

__all__ = ["VARIANTS", "ToyConfig", "variant_flags"]

VARIANTS = ("model1", "model2", "model3", "model4", "cma")

# variant -> (dual branch, attention at stage 2, attention at stage 3)
_FLAGS = {
    "model1": (False, False, False),
    "model2": (True, False, False),
    "model3": (True, True, False),
    "model4": (True, False, True),
    "cma": (True, True, True),
}


def variant_flags(variant: str) -> tuple[bool, bool, bool]:
    try:
        return _FLAGS[variant]
    except KeyError:
        raise ContractError(
            f"unknown variant {variant!r}; expected one of {', '.join(VARIANTS)}"
        ) from None


@dataclass(frozen=True)
class ToyConfig:
    """Knobs of the desk-scale trainer.

    ``channels`` are the per-branch widths of the three processed encoding
    stages.  The learning rate decays by ``lr_decay`` every
    ``lr_decay_every`` epochs.  ``eval_every`` controls how often the
    held-out split is scored (0 keeps only the final-epoch evaluation).
    """

    input_size: tuple[int, int] = (32, 32)
    channels: tuple[int, int, int] = (8, 16, 32)
    lr: float = 1e-4
    lr_decay: float = 0.1
    lr_decay_every: int = 50
    batch: int = 16
    epochs: int = 10
    seed: int = 0
    holdout_frac: float = 0.2
    eval_every: int = 1

    def __post_init__(self):
        if len(self.channels) != 3:
            raise ContractError("ToyConfig: exactly three stage widths are required")
        if len(self.input_size) != 2 or min(self.input_size) < 8:
            raise ContractError("ToyConfig: input_size must be at least 8x8")
        if self.batch < 1 or self.epochs < 0:
            raise ContractError("ToyConfig: batch must be >= 1 and epochs >= 0")
        if not 0.0 < self.holdout_frac < 1.0:
            raise ContractError("ToyConfig: holdout_frac must lie in (0, 1)")

    def lr_at(self, epoch: int) -> float:
        return self.lr * self.lr_decay ** (epoch // self.lr_decay_every)
