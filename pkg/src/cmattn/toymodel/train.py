"""Training loop, loss trace, and the ablation runner."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .. import metrics as M
from ..losses import GroundTruth, hybrid_loss
from ..tensor_ops import ContractError, Tape, Tensor
from .config import ToyConfig, VARIANTS, variant_flags
from .data import SyntheticSample
from .model import init_params, model_forward
from .optim import AdamState, adam_step

__all__ = ["EpochRow", "LossTrace", "TrainResult", "run_ablation", "train"]


@dataclass(frozen=True)
class EpochRow:
    epoch: int
    step: int
    loss: float
    mae: float
    f_beta: float
    s_alpha: float
    e_phi: float


@dataclass
class LossTrace:
    """Per-step hybrid losses plus per-epoch held-out evaluations."""

    step_losses: list[float] = field(default_factory=list)
    epoch_rows: list[EpochRow] = field(default_factory=list)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="\n") as fh:
            fh.write("epoch,step,loss,mae,f_beta,s_alpha,e_phi\n")
            for r in self.epoch_rows:
                fh.write(
                    f"{r.epoch},{r.step},{r.loss:.6f},{r.mae:.6f},"
                    f"{r.f_beta:.6f},{r.s_alpha:.6f},{r.e_phi:.6f}\n"
                )


@dataclass
class TrainResult:
    variant: str
    config: ToyConfig
    params: dict[str, Tensor]
    trace: LossTrace
    final_report: M.MetricReport
    test_indices: list[int]


def _split(n: int, frac: float, rng: np.random.Generator) -> tuple[list[int], list[int]]:
    if n == 1:
        return [0], [0]
    order = rng.permutation(n)
    n_test = min(max(1, int(round(frac * n))), n - 1)
    return [int(i) for i in order[n_test:]], [int(i) for i in order[:n_test]]


def predict_map(
    params: dict[str, Tensor], sample: SyntheticSample, variant: str, config: ToyConfig
) -> Tensor:
    """The model's saliency output: the final supervision head."""
    pred, _ = model_forward(params, sample, variant, config)
    return pred.maps[2]


def _eval_pairs(
    params: dict[str, Tensor],
    dataset: list[SyntheticSample],
    indices: list[int],
    variant: str,
    config: ToyConfig,
) -> list[M.EvalPair]:
    return [
        M.EvalPair(
            pred=predict_map(params, dataset[i], variant, config).data,
            gt=dataset[i].gt.data,
        )
        for i in indices
    ]


def train(
    config: ToyConfig, variant: str, dataset: list[SyntheticSample]
) -> TrainResult:
    """Train one variant; fully deterministic for a fixed config seed."""
    if not dataset:
        raise ContractError("train: dataset is empty")
    variant_flags(variant)  # validate early
    rng = np.random.default_rng(config.seed)
    train_idx, test_idx = _split(len(dataset), config.holdout_frac, rng)
    params = init_params(variant, config, rng)
    state = AdamState.zeros_like(params)
    trace = LossTrace()
    step = 0

    for epoch in range(config.epochs):
        lr = config.lr_at(epoch)
        order = [train_idx[int(i)] for i in rng.permutation(len(train_idx))]
        epoch_losses: list[float] = []
        for start in range(0, len(order), config.batch):
            batch = order[start : start + config.batch]
            acc: dict[str, np.ndarray] = {k: np.zeros(p.shape) for k, p in params.items()}
            batch_loss = 0.0
            for i in batch:
                sample = dataset[i]
                tape = Tape()
                pred, _ = model_forward(params, sample, variant, config, tape=tape)
                loss = hybrid_loss(pred, GroundTruth(sample.gt), tape=tape)
                grads = tape.backward(loss)
                for name, p in params.items():
                    g = grads.get(p)
                    if g is not None:
                        acc[name] += g
                batch_loss += loss.item()
            scale = 1.0 / len(batch)
            grads_mean = {k: v * scale for k, v in acc.items()}
            step += 1
            params = adam_step(params, grads_mean, state, step, lr)
            batch_loss *= scale
            trace.step_losses.append(batch_loss)
            epoch_losses.append(batch_loss)

        last_epoch = epoch == config.epochs - 1
        if last_epoch or (config.eval_every and (epoch + 1) % config.eval_every == 0):
            report = M.evaluate(_eval_pairs(params, dataset, test_idx, variant, config))
            trace.epoch_rows.append(
                EpochRow(
                    epoch=epoch,
                    step=step,
                    loss=math.fsum(epoch_losses) / max(len(epoch_losses), 1),
                    mae=report.mae,
                    f_beta=report.f_beta,
                    s_alpha=report.s_alpha,
                    e_phi=report.e_phi,
                )
            )

    final_report = M.evaluate(_eval_pairs(params, dataset, test_idx, variant, config))
    return TrainResult(
        variant=variant,
        config=config,
        params=params,
        trace=trace,
        final_report=final_report,
        test_indices=test_idx,
    )


def run_ablation(
    config: ToyConfig,
    dataset: list[SyntheticSample],
    variants: tuple[str, ...] = VARIANTS,
) -> dict[str, TrainResult]:
    """Train every requested variant on the same dataset and config."""
    return {v: train(config, v, dataset) for v in variants}
