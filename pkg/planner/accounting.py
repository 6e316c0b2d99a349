"""
Average-bit and model-size accounting for a precision plan.

Quantized matrices cost their packed bit-planes plus one float32 scale per
row per plane; full-precision matrices, biases and layer norms cost 4 bytes
per parameter.
"""

from dataclasses import dataclass

from kernel.gemv import footprint_bytes
from planner.groups import Block, model_layout, target_matrices
from planner.plan import FP_BITS, PrecisionPlan


def sublayer_average_bits(plan: PrecisionPlan, block: Block | str) -> float:
    """Parameter-weighted mean bit width over the block's weight matrices"""
    block = Block(block)
    specs = [spec for spec in target_matrices(plan.dims) if spec.block == block]
    if not specs:
        raise ValueError(f"Model has no {block.value} weight matrices")

    total_params = sum(spec.numel for spec in specs)
    total_bits = sum(plan.matrix_bits(spec) * spec.numel for spec in specs)
    return total_bits / total_params


@dataclass(frozen=True)
class ModelSize:
    avg_bits: float  # over quantization targets only
    whole_model_avg_bits: float  # biases and layer norms counted at 32 bits
    quantized_bytes: int
    dense_bytes: int
    ratio: float
    block_avg_bits: dict[str, float]
    block_shares: dict[str, float]  # fraction of all parameters per block
    target_share: float  # fraction of parameters that are quantization targets

    @property
    def quantized_mb(self) -> float:
        return self.quantized_bytes / 2**20

    @property
    def dense_mb(self) -> float:
        return self.dense_bytes / 2**20


def matrix_bytes(plan: PrecisionPlan, spec) -> int:
    clusters = plan.row_clusters(spec)
    if clusters is None:
        return 4 * spec.numel
    return footprint_bytes(clusters, spec.shape[1])


def model_size(plan: PrecisionPlan) -> ModelSize:
    plan.check_coverage()
    layout = model_layout(plan.dims)

    total_params = sum(spec.numel for spec in layout)
    target_params = 0
    target_bits = 0.0
    unquantized_params = 0
    quantized_bytes = 0
    block_params: dict[str, int] = {block.value: 0 for block in Block}

    for spec in layout:
        block_params[spec.block.value] += spec.numel
        if spec.is_target:
            target_params += spec.numel
            target_bits += plan.matrix_bits(spec) * spec.numel
            quantized_bytes += matrix_bytes(plan, spec)
        else:
            unquantized_params += spec.numel
            quantized_bytes += 4 * spec.numel

    dense_bytes = 4 * total_params
    block_avg_bits = {
        block.value: sublayer_average_bits(plan, block)
        for block in Block
        if block_params[block.value]
    }

    return ModelSize(
        avg_bits=target_bits / target_params,
        whole_model_avg_bits=(target_bits + FP_BITS * unquantized_params) / total_params,
        quantized_bytes=quantized_bytes,
        dense_bytes=dense_bytes,
        ratio=dense_bytes / quantized_bytes,
        block_avg_bits=block_avg_bits,
        block_shares={name: count / total_params for name, count in block_params.items()},
        target_share=target_params / total_params,
    )
