"""
Subcommands. Each command registers its own arguments and returns a
CommandResult; report lines go to the RunLog, never straight to stdout.
"""

import argparse
import json
from pathlib import Path

import numpy as np
import torch

from bcq.greedy import quantize_rows
from bcq.quantized import QuantizedTensor
from cli.bench import DEFAULT_ITERS, run_bench
from cli.log import RunLog
from container.format import (
    HEADER,
    VERSION,
    Tensor,
    read_checkpoint_with_attributes,
    read_metadata,
    write_checkpoint,
)
from kernel.gemv import footprint_bytes, memory_footprint
from planner.accounting import model_size
from planner.errors import MissingFrequencyError
from planner.frequency import FrequencyTable
from planner.groups import BASE_DIMS, ModelDims, model_layout
from planner.plan import PlanFile, PrecisionPlan, cumulative_phases, load_plan
from planner.presets import PLAN_TEMPLATES, get_template
from toynmt.checkpoint import load_model, save_model
from toynmt.config import ToyModelConfig, TrainSchedule
from toynmt.model import ToyTransformer
from toynmt.retrain import evaluate, multiphase_retrain, train_dense, write_history_csv
from toynmt.sensitivity import DEFAULT_WIDTHS, sensitivity_sweep
from toynmt.tasks import TASKS, make_task


class CommandResult:
    """
    Outcome of a command run. exit_code 0 means every internal
    consistency check passed.
    """

    def __init__(self, exit_code: int = 0):
        self.exit_code = exit_code

    @staticmethod
    def ok():
        return CommandResult()

    @staticmethod
    def failed(exit_code: int = 1):
        return CommandResult(exit_code)

    @property
    def succeeded(self) -> bool:
        return self.exit_code == 0


class Command:
    name: str = ""
    help: str = ""

    def add_arguments(self, parser: argparse.ArgumentParser):
        # Overriden in subclasses
        pass

    def run(self, args: argparse.Namespace, log: RunLog) -> CommandResult:
        raise NotImplementedError


def resolve_plan(plan_arg: str, dims: ModelDims) -> PrecisionPlan:
    """A preset id or the path of a JSON plan file"""
    template = get_template(plan_arg)
    if template is not None:
        return template.build(dims)
    if Path(plan_arg).is_file():
        return load_plan(plan_arg, dims)
    raise ValueError(f"{plan_arg!r} is neither a plan preset nor a plan file")


def checkpoint_dims(attributes: dict) -> ModelDims:
    if "dims" not in attributes:
        raise ValueError("Checkpoint carries no model dims attribute")
    return ModelDims.model_validate(attributes["dims"])


def tensor_bytes(tensor: Tensor) -> int:
    if isinstance(tensor, QuantizedTensor):
        return memory_footprint(tensor)
    return tensor.nbytes


def _add_task_arguments(parser: argparse.ArgumentParser):
    parser.add_argument("--task", choices=sorted(TASKS), default="copy")
    parser.add_argument("--seq-len", type=int, default=8)
    parser.add_argument("--zipf", type=float, default=None, help="Zipf exponent for word ids")
    parser.add_argument("--noise", type=float, default=0.0, help="target word corruption rate")
    parser.add_argument("--eval-size", type=int, default=256)


class QuantizeCommand(Command):
    name = "quantize"
    help = "quantize a checkpoint with a precision plan"

    def add_arguments(self, parser: argparse.ArgumentParser):
        parser.add_argument("--in", dest="input", required=True, help="input BCQ1 checkpoint")
        parser.add_argument("--plan", required=True, help="plan preset id or plan JSON file")
        parser.add_argument("--freq", default=None, help="token frequency file")
        parser.add_argument("--out", dest="output", required=True, help="output BCQ1 checkpoint")

    def run(self, args: argparse.Namespace, log: RunLog) -> CommandResult:
        tensors, attributes = read_checkpoint_with_attributes(args.input)
        dims = checkpoint_dims(attributes)
        plan = resolve_plan(args.plan, dims)
        plan.check_coverage()

        freq = None
        if plan.needs_frequencies():
            if args.freq is None:
                raise MissingFrequencyError(
                    "Plan clusters the embedding by frequency; pass --freq"
                )
            freq = FrequencyTable.load(args.freq, dims.vocab_size)

        layout = {spec.name: spec for spec in model_layout(dims)}
        output: list[Tensor] = []
        passed_through_packed = False
        for tensor in tensors:
            spec = layout.get(tensor.name)
            row_bits = plan.row_bits(spec, freq) if spec is not None and spec.is_target else None
            if row_bits is None or isinstance(tensor, QuantizedTensor):
                if row_bits is not None:
                    log.add_warning(f"{tensor.name} is already quantized; kept as is")
                    passed_through_packed = True
                output.append(tensor)
                continue
            if tensor.shape != spec.shape:
                raise ValueError(f"{tensor.name}: shape {tensor.shape} != layout {spec.shape}")
            output.append(quantize_rows(tensor, row_bits, threads=args.threads))

        attributes = attributes | {"plan": PlanFile.from_plan(plan).model_dump(mode="json")}
        written = write_checkpoint(output, args.output, attributes)

        size = model_size(plan)
        for block, bits in size.block_avg_bits.items():
            log.add_info(f"{block:<10} avg bits {bits:6.3f}  ({size.block_shares[block]:.1%} of params)")
        log.add_info(f"targets    avg bits {size.avg_bits:6.3f}")
        log.add_info(f"model      avg bits {size.whole_model_avg_bits:6.3f}")
        log.add_info(
            f"size {size.quantized_mb:.3f} MiB vs {size.dense_mb:.3f} MiB dense, "
            f"ratio {size.ratio:.2f}x"
        )
        log.add_info(f"wrote {written} bytes to {args.output}")

        names = {tensor.name for tensor in tensors}
        if names != set(layout) or passed_through_packed:
            log.add_warning("checkpoint differs from the model layout; size check skipped")
            return CommandResult.ok()

        input_bytes = sum(tensor_bytes(tensor) for tensor in tensors)
        output_bytes = sum(tensor_bytes(tensor) for tensor in output)
        if input_bytes != size.dense_bytes or output_bytes != size.quantized_bytes:
            log.add_error(
                f"payload sizes {input_bytes} -> {output_bytes} do not match the plan "
                f"accounting {size.dense_bytes} -> {size.quantized_bytes}"
            )
            return CommandResult.failed()
        log.add_success(f"payload {input_bytes} -> {output_bytes} bytes matches the plan accounting")
        return CommandResult.ok()


class BenchCommand(Command):
    name = "bench"
    help = "time dense GEMV against the packed kernels"

    def add_arguments(self, parser: argparse.ArgumentParser):
        parser.add_argument("--rows", type=int, default=512)
        parser.add_argument("--cols", type=int, default=512)
        parser.add_argument("--q", type=int, default=1)
        parser.add_argument("--mu", type=int, default=8)
        parser.add_argument("--iters", type=int, default=DEFAULT_ITERS)

    def run(self, args: argparse.Namespace, log: RunLog) -> CommandResult:
        reports = run_bench(
            args.rows, args.cols, args.q, args.mu, args.iters, args.seed, args.threads
        )
        log.add_success("gemv_lut and dense GEMV agree with gemv_direct")
        for report in reports:
            log.add_info(report.describe())

        dense_bytes = 4 * args.rows * args.cols
        packed_bytes = footprint_bytes([(args.rows, args.q)], args.cols)
        log.add_info(
            f"weight memory {packed_bytes} B vs {dense_bytes} B dense "
            f"({dense_bytes / packed_bytes:.1f}x smaller)"
        )
        return CommandResult.ok()


class SweepCommand(Command):
    name = "sweep"
    help = "per-group bit-width sensitivity of a toy checkpoint"

    def add_arguments(self, parser: argparse.ArgumentParser):
        parser.add_argument("--in", dest="input", required=True, help="toy model checkpoint")
        parser.add_argument("--out", dest="output", required=True, help="CSV path")
        parser.add_argument("--widths", type=int, nargs="+", default=list(DEFAULT_WIDTHS))
        _add_task_arguments(parser)

    def run(self, args: argparse.Namespace, log: RunLog) -> CommandResult:
        model, quantized = load_model(args.input)
        if quantized:
            log.add_warning(f"{len(quantized)} matrices in the checkpoint are already quantized")

        task = make_task(
            args.task,
            model.config.vocab_size,
            seq_len=args.seq_len,
            zipf_exponent=args.zipf,
            noise=args.noise,
        )
        table = sensitivity_sweep(model, task.eval_batch(args.eval_size, args.seed), widths=args.widths)
        table.write_csv(args.output)

        log.add_info(f"baseline loss {table.baseline:.4f}")
        for row in table.rows:
            log.add_info(f"{row.group.value:<10} q={row.bits}  loss {row.metric:.4f}  (+{row.degradation:.4f})")
        for group, degradation in table.average_degradation().items():
            log.add_info(f"average degradation of {group.value}: {degradation:.4f}")
        for bits, degradation in table.width_degradation().items():
            log.add_info(f"average degradation at {bits} bits: {degradation:.4f}")
        log.add_success(f"wrote {len(table.rows)} rows to {args.output}")
        return CommandResult.ok()


class TrainToyCommand(Command):
    name = "train-toy"
    help = "train a toy model, then retrain it quantized phase by phase"

    def add_arguments(self, parser: argparse.ArgumentParser):
        parser.add_argument("--out-dir", required=True)
        parser.add_argument("--plan", default="emb-2.5-dec-1.8-enc-3.7")
        parser.add_argument("--phases", type=int, choices=(1, 3), default=3)
        parser.add_argument("--dense-steps", type=int, default=400)
        parser.add_argument("--steps", type=int, default=200, help="retraining steps per phase")
        parser.add_argument("--pnr", type=int, default=50)
        parser.add_argument("--batch-size", type=int, default=32)
        parser.add_argument("--d-model", type=int, default=64)
        parser.add_argument("--d-ffn", type=int, default=256)
        parser.add_argument("--layers-enc", type=int, default=2)
        parser.add_argument("--layers-dec", type=int, default=2)
        parser.add_argument("--heads", type=int, default=4)
        parser.add_argument("--vocab", type=int, default=64)
        parser.add_argument("--progress", action="store_true")
        _add_task_arguments(parser)

    def run(self, args: argparse.Namespace, log: RunLog) -> CommandResult:
        config = ToyModelConfig(
            d_model=args.d_model,
            d_ffn=args.d_ffn,
            n_layers_enc=args.layers_enc,
            n_layers_dec=args.layers_dec,
            n_heads=args.heads,
            vocab_size=args.vocab,
            max_seq_len=max(32, args.seq_len + 1),
        )
        out_dir = Path(args.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)

        torch.manual_seed(args.seed)
        model = ToyTransformer(config)
        task = make_task(
            args.task,
            config.vocab_size,
            seq_len=args.seq_len,
            zipf_exponent=args.zipf,
            noise=args.noise,
        )
        eval_batch = task.eval_batch(args.eval_size, args.seed + 1)

        dense = train_dense(
            model,
            task,
            TrainSchedule(
                total_steps=args.dense_steps,
                d_model=config.d_model,
                batch_size=args.batch_size,
            ),
            seed=args.seed,
            progress=args.progress,
        )
        write_history_csv(dense, out_dir / "dense_history.csv")
        save_model(model, out_dir / "dense.bcq")
        log.add_info(f"dense model: eval loss {evaluate(model, eval_batch):.4f}")

        plan = resolve_plan(args.plan, config.dims)
        freq = task.frequencies(4096, seed=args.seed) if plan.needs_frequencies() else None
        phases = cumulative_phases(plan) if args.phases == 3 else [plan]
        schedule = TrainSchedule(
            pnr=args.pnr,
            total_steps=args.steps,
            d_model=config.d_model,
            batch_size=args.batch_size,
        )
        results = multiphase_retrain(
            model, phases, schedule, task, freq, seed=args.seed, checkpoint_dir=out_dir,
            progress=args.progress,
        )

        for phase in results:
            write_history_csv(phase.retrain, out_dir / f"phase{phase.index + 1}_history.csv")
            restored, _ = load_model(phase.checkpoint)
            groups = ", ".join(sorted(group.value for group in phase.plan.quantized_groups()))
            log.add_info(
                f"phase {phase.index + 1} ({groups}): eval loss "
                f"{evaluate(restored, eval_batch):.4f} -> {phase.checkpoint}"
            )
        log.add_success(f"{len(results)} phase checkpoints written to {out_dir}")
        return CommandResult.ok()


class InspectCommand(Command):
    name = "inspect"
    help = "print a checkpoint's metadata and per-tensor bit statistics"

    def add_arguments(self, parser: argparse.ArgumentParser):
        parser.add_argument("path")

    def run(self, args: argparse.Namespace, log: RunLog) -> CommandResult:
        tensors, attributes = read_checkpoint_with_attributes(args.path)
        metadata, payload_start = read_metadata(Path(args.path).read_bytes())
        log.add_info(
            f"BCQ1 version {VERSION}, {len(tensors)} tensors, "
            f"metadata {payload_start - HEADER.size} B, payload starts at {payload_start}"
        )
        log.add_info(f"attributes: {json.dumps(attributes, sort_keys=True)}")
        for entry, tensor in zip(metadata.tensors, tensors):
            shape = f"{tensor.rows}x{tensor.cols}"
            where = f"offset {entry.offset} length {entry.length} B"
            if isinstance(tensor, QuantizedTensor):
                starts = np.cumsum([0] + [count for count, _ in tensor.clusters[:-1]])
                runs = ", ".join(
                    f"rows {start}+{count}: {bits}b"
                    for start, (count, bits) in zip(starts.tolist(), tensor.clusters)
                )
                log.add_info(
                    f"{tensor.name} {entry.kind.value} {shape} {where} "
                    f"avg {tensor.average_bits:.3f} bits [{runs}]"
                )
            else:
                log.add_info(f"{tensor.name} {entry.kind.value} {shape} {where}")
        return CommandResult.ok()


class PlansCommand(Command):
    name = "plans"
    help = "list plan presets with their size at the base configuration"

    def run(self, args: argparse.Namespace, log: RunLog) -> CommandResult:
        for template_id, template in PLAN_TEMPLATES.items():
            size = model_size(template.build(BASE_DIMS))
            log.add_info(
                f"{template_id:<24} {size.whole_model_avg_bits:6.3f} bits "
                f"{size.quantized_mb:8.2f} MiB x{size.ratio:5.2f}  {template.description}"
            )
        return CommandResult.ok()


# Command registry
COMMANDS: dict[str, Command] = {
    command.name: command
    for command in (
        QuantizeCommand(),
        BenchCommand(),
        SweepCommand(),
        TrainToyCommand(),
        InspectCommand(),
        PlansCommand(),
    )
}
