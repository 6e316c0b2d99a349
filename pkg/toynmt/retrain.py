"""
Dense training and retraining with periodic quantization projection.

Every pnr mini-batch updates the weights are projected onto their quantized
values; in between, plain Adam updates run on the float weights so they can
drift away from the quantized point and find a better one. Optimizer state
carries over projections.
"""

import copy
import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from tqdm import tqdm

from bcq.quantized import QuantizedTensor
from planner.frequency import FrequencyTable
from planner.plan import PrecisionPlan
from toynmt.checkpoint import save_model
from toynmt.config import TrainSchedule
from toynmt.errors import DivergenceError, PhaseOrderError
from toynmt.model import ToyTransformer
from toynmt.quantized import project_weights
from toynmt.schedule import lr_at
from toynmt.tasks import PAD, Batch, BaseTask

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class HistoryRow:
    step: int
    loss: float
    lr: float
    projected: bool  # projection ran before this step's update


@dataclass
class RetrainResult:
    history: list[HistoryRow] = field(default_factory=list)
    quantized: dict[str, QuantizedTensor] = field(default_factory=dict)  # last projection
    final_projection: bool = False  # projected once more after the last update

    @property
    def projection_steps(self) -> list[int]:
        steps = [row.step for row in self.history if row.projected]
        if self.final_projection:
            steps.append(len(self.history))
        return steps


def batch_loss(model: ToyTransformer, batch: Batch) -> torch.Tensor:
    logits = model(batch.source, batch.target_in)
    return F.cross_entropy(
        logits.reshape(-1, logits.shape[-1]),
        batch.target_out.reshape(-1),
        ignore_index=PAD,
    )


def evaluate(model: ToyTransformer, batch: Batch) -> float:
    """Mean per-token cross entropy on a held-out batch"""
    was_training = model.training
    model.eval()
    with torch.no_grad():
        loss = float(batch_loss(model, batch))
    model.train(was_training)
    return loss


def make_optimizer(model: ToyTransformer, schedule: TrainSchedule) -> torch.optim.Adam:
    return torch.optim.Adam(
        model.parameters(), lr=lr_at(1, schedule), betas=(0.9, 0.999), eps=1e-9
    )


def _check_schedule(model: ToyTransformer, schedule: TrainSchedule) -> None:
    if schedule.d_model != model.config.d_model:
        raise ValueError(
            f"Schedule is tuned for d_model {schedule.d_model}, model has {model.config.d_model}"
        )


def _train(
    model: ToyTransformer,
    task: BaseTask,
    schedule: TrainSchedule,
    seed: int,
    plan: PrecisionPlan | None,
    freq: FrequencyTable | None,
    final_projection: bool,
    desc: str,
    progress: bool,
) -> RetrainResult:
    _check_schedule(model, schedule)
    rng = np.random.default_rng(seed)
    optimizer = make_optimizer(model, schedule)
    result = RetrainResult()
    model.train()

    steps = tqdm(range(schedule.total_steps), desc=desc, disable=not progress, leave=False)
    for step in steps:
        projected = plan is not None and step % schedule.pnr == 0
        if projected:
            result.quantized = project_weights(model, plan, freq)

        lr = lr_at(step + 1, schedule)
        for group in optimizer.param_groups:
            group["lr"] = lr

        loss = batch_loss(model, task.sample(schedule.batch_size, rng))
        value = loss.item()
        if not math.isfinite(value):
            raise DivergenceError(step, value, lr)

        optimizer.zero_grad()
        loss.backward()
        optimizer.step()

        result.history.append(HistoryRow(step, value, lr, projected))
        steps.set_postfix(loss=f"{value:.3f}")

    if plan is not None and final_projection:
        result.quantized = project_weights(model, plan, freq)
        result.final_projection = True
    return result


def train_dense(
    model: ToyTransformer,
    task: BaseTask,
    schedule: TrainSchedule,
    seed: int = 0,
    progress: bool = False,
) -> RetrainResult:
    """Ordinary float training with the same schedule and optimizer"""
    return _train(model, task, schedule, seed, None, None, False, "dense", progress)


def pnr_retrain(
    model: ToyTransformer,
    plan: PrecisionPlan,
    schedule: TrainSchedule,
    task: BaseTask,
    freq: FrequencyTable | None = None,
    seed: int = 0,
    final_projection: bool = False,
    progress: bool = False,
) -> RetrainResult:
    """
    Retrain model in place. Projection runs before the update of every step
    divisible by schedule.pnr (step 0 included). result.quantized holds the
    tensors of the last projection. With final_projection the weights are
    projected once more after the last update, so the model itself ends on
    its quantized values; that projection is reported at step total_steps.
    """
    plan.check_coverage()
    logger.info(
        "retraining %d steps, projecting every %d, groups %s",
        schedule.total_steps,
        schedule.pnr,
        sorted(group.value for group in plan.quantized_groups()),
    )
    return _train(model, task, schedule, seed, plan, freq, final_projection, "retrain", progress)


@dataclass
class PhaseResult:
    index: int
    plan: PrecisionPlan
    retrain: RetrainResult
    start_state: dict[str, torch.Tensor]
    checkpoint: Path | None = None


def check_cumulative(phase_plans: list[PrecisionPlan]) -> None:
    for index in range(1, len(phase_plans)):
        before = phase_plans[index - 1].quantized_groups()
        after = phase_plans[index].quantized_groups()
        dropped = before - after
        if dropped:
            names = ", ".join(sorted(group.value for group in dropped))
            raise PhaseOrderError(f"Phase {index + 1} returns {names} to full precision")


def multiphase_retrain(
    model: ToyTransformer,
    phase_plans: list[PrecisionPlan],
    schedule: TrainSchedule,
    task: BaseTask,
    freq: FrequencyTable | None = None,
    seed: int = 0,
    checkpoint_dir: str | Path | None = None,
    progress: bool = False,
) -> list[PhaseResult]:
    """
    Retrain phase by phase. Each phase starts from the weights the previous
    one ended with, and quantizes a superset of its groups. Every phase ends
    with a final projection, so its checkpoint and the next phase's starting
    weights are the quantized values.
    """
    check_cumulative(phase_plans)
    if checkpoint_dir is not None:
        Path(checkpoint_dir).mkdir(parents=True, exist_ok=True)

    results: list[PhaseResult] = []
    for index, plan in enumerate(phase_plans):
        start_state = copy.deepcopy(model.state_dict())
        retrain = pnr_retrain(
            model,
            plan,
            schedule,
            task,
            freq,
            seed=seed + index,
            final_projection=True,
            progress=progress,
        )
        phase = PhaseResult(index, plan, retrain, start_state)

        if checkpoint_dir is not None:
            phase.checkpoint = Path(checkpoint_dir) / f"phase{index + 1}.bcq"
            save_model(model, phase.checkpoint, retrain.quantized)
        results.append(phase)
        logger.info("phase %d done, last loss %.4f", index + 1, _last_loss(retrain))

    return results


def _last_loss(result: RetrainResult) -> float:
    return result.history[-1].loss if result.history else float("nan")


def write_history_csv(result: RetrainResult, path: str | Path) -> None:
    """One row per step; a final projection gets a row of its own with no loss"""
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["step", "loss", "lr", "projected"])
        for row in result.history:
            writer.writerow([row.step, f"{row.loss:.6f}", f"{row.lr:.6g}", int(row.projected)])
        if result.final_projection:
            writer.writerow([len(result.history), "", "", 1])
