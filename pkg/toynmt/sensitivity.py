import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import torch

from planner.frequency import FrequencyTable
from planner.groups import ParameterGroup, group_matrices, group_param_count
from planner.plan import FP_BITS, PrecisionPlan
from toynmt.errors import EmptyGroupError
from toynmt.model import ToyTransformer
from toynmt.quantized import project_weights
from toynmt.retrain import evaluate
from toynmt.tasks import Batch

logger = logging.getLogger(__name__)

DEFAULT_WIDTHS: tuple[int, ...] = (1, 2, 3, 4)


@dataclass(frozen=True)
class SweepRow:
    group: ParameterGroup
    bits: int | None  # None: full precision pass-through
    metric: float
    degradation: float  # metric - baseline


@dataclass
class SweepTable:
    baseline: float
    rows: list[SweepRow] = field(default_factory=list)

    def metric(self, group: ParameterGroup, bits: int | None) -> float:
        for row in self.rows:
            if row.group == group and row.bits == bits:
                return row.metric
        raise KeyError(f"No sweep entry for {group.value} at {bits} bits")

    def average_degradation(self) -> dict[ParameterGroup, float]:
        """
        Mean degradation of each group over the quantized widths it was swept
        at. Full precision rows are left out. This ranks groups by how much
        they suffer from quantization overall.
        """
        by_group: dict[ParameterGroup, list[float]] = {}
        for row in self.rows:
            if row.bits is not None:
                by_group.setdefault(row.group, []).append(row.degradation)
        return {group: sum(values) / len(values) for group, values in by_group.items()}

    def width_degradation(self) -> dict[int, float]:
        """Mean degradation across groups for every quantized width"""
        by_width: dict[int, list[float]] = {}
        for row in self.rows:
            if row.bits is not None:
                by_width.setdefault(row.bits, []).append(row.degradation)
        return {bits: sum(values) / len(values) for bits, values in sorted(by_width.items())}

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle)
            writer.writerow(["group", "q", "metric", "degradation"])
            for row in self.rows:
                bits = FP_BITS if row.bits is None else row.bits
                writer.writerow(
                    [row.group.value, bits, f"{row.metric:.6f}", f"{row.degradation:.6f}"]
                )


def sensitivity_sweep(
    model: ToyTransformer,
    eval_batch: Batch,
    groups: Sequence[ParameterGroup] = tuple(ParameterGroup),
    widths: Sequence[int | None] = DEFAULT_WIDTHS,
    freq: FrequencyTable | None = None,
) -> SweepTable:
    """
    Quantize one group at a time to each width, every other group in full
    precision, and record the held-out loss. The model's weights are restored
    after every measurement. A width of None measures the untouched model.
    """
    dims = model.config.dims
    for group in groups:
        if group_param_count(dims, group) == 0:
            raise EmptyGroupError(f"Group {group.value} has no weights in this model")

    table = SweepTable(baseline=evaluate(model, eval_batch))
    params = dict(model.named_parameters())

    for group in groups:
        names = [spec.name for spec in group_matrices(dims, group)]
        saved = {name: params[name].detach().clone() for name in names}

        for bits in widths:
            if bits is None:
                metric = evaluate(model, eval_batch)
            else:
                settings = {g: (bits if g == group else None) for g in ParameterGroup}
                project_weights(model, PrecisionPlan(dims=dims, groups=settings), freq)
                metric = evaluate(model, eval_batch)
                with torch.no_grad():
                    for name in names:
                        params[name].copy_(saved[name])

            table.rows.append(SweepRow(group, bits, metric, metric - table.baseline))
            logger.debug("sweep %s at %s bits: %.4f", group.value, bits, metric)

    return table
