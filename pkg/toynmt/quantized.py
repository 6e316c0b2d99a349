"""
Glue between a ToyTransformer and precision plans: projecting the float
weights onto their quantized values, and running inference on packed weights.
"""

import logging
from contextlib import contextmanager
from typing import Iterator, Sequence

import numpy as np
import torch

from bcq.greedy import dequantize, quantize_rows
from bcq.quantized import QuantizedTensor
from container.tensors import DenseTensor
from kernel.lut import DEFAULT_MU
from planner.frequency import FrequencyTable
from planner.groups import target_matrices
from planner.plan import PrecisionPlan
from toynmt.layers import Kernel, Linear
from toynmt.model import ToyTransformer
from toynmt.tasks import BOS, EOS

logger = logging.getLogger(__name__)

EMBEDDING_NAME = "embedding.weight"


def _check_plan(model: ToyTransformer, plan: PrecisionPlan) -> None:
    if plan.dims != model.config.dims:
        raise ValueError(f"Plan is for {plan.dims}, model has {model.config.dims}")
    plan.check_coverage()


def quantize_model(
    model: ToyTransformer,
    plan: PrecisionPlan,
    freq: FrequencyTable | None = None,
    threads: int = 1,
) -> dict[str, QuantizedTensor]:
    """Quantize every matrix the plan does not keep in full precision"""
    _check_plan(model, plan)
    params = dict(model.named_parameters())
    quantized: dict[str, QuantizedTensor] = {}

    for spec in target_matrices(plan.dims):
        row_bits = plan.row_bits(spec, freq)
        if row_bits is None:
            continue
        weights = DenseTensor.from_array(spec.name, params[spec.name].detach().cpu().numpy())
        quantized[spec.name] = quantize_rows(weights, row_bits, threads=threads)

    return quantized


def load_quantized(model: ToyTransformer, quantized: dict[str, QuantizedTensor]) -> None:
    """Overwrite the float weights with the reconstructions of quantized"""
    params = dict(model.named_parameters())
    with torch.no_grad():
        for name, t in quantized.items():
            param = params[name]
            param.copy_(torch.from_numpy(dequantize(t).data).to(param.dtype))


def project_weights(
    model: ToyTransformer,
    plan: PrecisionPlan,
    freq: FrequencyTable | None = None,
    threads: int = 1,
) -> dict[str, QuantizedTensor]:
    """
    Replace each quantized matrix by dequantize(quantize(W)) in place.
    Full-precision matrices, biases and layer norms are left untouched.
    """
    quantized = quantize_model(model, plan, freq, threads)
    load_quantized(model, quantized)
    logger.debug("projected %d weight matrices", len(quantized))
    return quantized


@contextmanager
def quantized_weights(
    model: ToyTransformer,
    quantized: dict[str, QuantizedTensor],
    kernel: Kernel | str = Kernel.DIRECT,
    mu: int = DEFAULT_MU,
) -> Iterator[ToyTransformer]:
    """Run the model's quantized products on the packed kernels inside the block"""
    kernel = Kernel(kernel)
    attached: list[Linear] = []
    try:
        for name, t in quantized.items():
            if name == EMBEDDING_NAME:
                model.attach_embedding(t, kernel, mu)
                continue
            module = model.get_submodule(name.removesuffix(".weight"))
            module.attach(t, kernel, mu)
            attached.append(module)
        yield model
    finally:
        for module in attached:
            module.detach_quantized()
        model.detach_embedding()


def _check_tokens(tokens: Sequence[int], vocab_size: int, what: str) -> None:
    bad = [token for token in tokens if not 0 <= token < vocab_size]
    if bad:
        raise ValueError(f"{what} has token ids outside the vocabulary: {bad}")


def next_token_logits(
    model: ToyTransformer,
    source: Sequence[int],
    prefix: Sequence[int],
    plan: PrecisionPlan | None = None,
    freq: FrequencyTable | None = None,
    kernel: Kernel | str = Kernel.DIRECT,
    mu: int = DEFAULT_MU,
) -> np.ndarray:
    """
    Logits over the vocabulary for the token after prefix. With a plan, every
    quantized matrix is packed and its products go through kernel; without
    one the float weights are used.
    """
    kernel = Kernel(kernel)
    vocab_size = model.config.vocab_size
    _check_tokens(source, vocab_size, "source")
    _check_tokens(prefix, vocab_size, "target prefix")
    if not source or not prefix:
        raise ValueError("source and target prefix must be non-empty")

    src = torch.tensor([list(source)], dtype=torch.long)
    tgt = torch.tensor([list(prefix)], dtype=torch.long)

    model.eval()
    with torch.no_grad():
        if plan is None:
            logits = model(src, tgt)
        else:
            with quantized_weights(model, quantize_model(model, plan, freq), kernel, mu):
                logits = model(src, tgt)
    return logits[0, -1].double().numpy()


def greedy_decode(
    model: ToyTransformer, source: Sequence[int], max_len: int | None = None
) -> list[int]:
    """Argmax decoding from BOS until EOS or max_len tokens (EOS not included)"""
    max_len = max_len or model.config.max_seq_len - 1
    src = torch.tensor([list(source)], dtype=torch.long)
    output = [BOS]

    model.eval()
    with torch.no_grad():
        memory = model.encode(src)
        for _ in range(max_len):
            hidden = model.decode(torch.tensor([output], dtype=torch.long), memory)
            token = int(model.output_logits(hidden[:, -1:])[0, -1].argmax())
            if token == EOS:
                break
            output.append(token)
    return output[1:]
