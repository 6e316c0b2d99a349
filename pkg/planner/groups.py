from dataclasses import dataclass
from enum import Enum
from math import prod

from pydantic import BaseModel, Field


class ParameterGroup(Enum):
    """Quantization targets, one per sub-layer type plus the shared embedding"""

    EMBEDDING = "embedding"
    ENC_EE = "enc_ee"  # encoder self attention
    ENC_FFN = "enc_ffn"
    DEC_DD = "dec_dd"  # decoder self attention
    DEC_ED = "dec_ed"  # encoder-decoder attention
    DEC_FFN = "dec_ffn"


class Block(Enum):
    EMBEDDING = "embedding"
    ENCODER = "encoder"
    DECODER = "decoder"


GROUP_BLOCKS: dict[ParameterGroup, Block] = {
    ParameterGroup.EMBEDDING: Block.EMBEDDING,
    ParameterGroup.ENC_EE: Block.ENCODER,
    ParameterGroup.ENC_FFN: Block.ENCODER,
    ParameterGroup.DEC_DD: Block.DECODER,
    ParameterGroup.DEC_ED: Block.DECODER,
    ParameterGroup.DEC_FFN: Block.DECODER,
}

ATTENTION_PROJECTIONS = ("q", "k", "v", "o")


class ModelDims(BaseModel):
    d_model: int = Field(ge=1)
    d_ffn: int = Field(ge=1)
    n_layers_enc: int = Field(ge=0)
    n_layers_dec: int = Field(ge=0)
    vocab_size: int = Field(ge=1)


# Transformer base configuration, shared embedding counted once (60.9M parameters)
BASE_DIMS = ModelDims(
    d_model=512, d_ffn=2048, n_layers_enc=6, n_layers_dec=6, vocab_size=32768
)


@dataclass(frozen=True)
class ParamSpec:
    name: str
    shape: tuple[int, ...]
    group: ParameterGroup | None  # None: bias or layer norm, never quantized

    @property
    def numel(self) -> int:
        return prod(self.shape)

    @property
    def block(self) -> Block:
        if self.name.startswith("encoder."):
            return Block.ENCODER
        if self.name.startswith("decoder."):
            return Block.DECODER
        return Block.EMBEDDING

    @property
    def is_target(self) -> bool:
        return self.group is not None


def _linear(prefix: str, rows: int, cols: int, group: ParameterGroup) -> list[ParamSpec]:
    return [
        ParamSpec(f"{prefix}.weight", (rows, cols), group),
        ParamSpec(f"{prefix}.bias", (rows,), None),
    ]


def _attention(prefix: str, d_model: int, group: ParameterGroup) -> list[ParamSpec]:
    specs: list[ParamSpec] = []
    for projection in ATTENTION_PROJECTIONS:
        specs += _linear(f"{prefix}.{projection}", d_model, d_model, group)
    return specs


def _ffn(prefix: str, dims: ModelDims, group: ParameterGroup) -> list[ParamSpec]:
    return _linear(f"{prefix}.w1", dims.d_ffn, dims.d_model, group) + _linear(
        f"{prefix}.w2", dims.d_model, dims.d_ffn, group
    )


def _norm(prefix: str, d_model: int) -> list[ParamSpec]:
    return [
        ParamSpec(f"{prefix}.weight", (d_model,), None),
        ParamSpec(f"{prefix}.bias", (d_model,), None),
    ]


def model_layout(dims: ModelDims) -> list[ParamSpec]:
    """
    Every parameter of the encoder-decoder model, named as in the toy model's
    state dict. Weight matrices are (out, in) so products are W . x.
    """
    specs: list[ParamSpec] = [
        ParamSpec(
            "embedding.weight", (dims.vocab_size, dims.d_model), ParameterGroup.EMBEDDING
        )
    ]

    for layer in range(dims.n_layers_enc):
        prefix = f"encoder.{layer}"
        specs += _attention(f"{prefix}.self_attn", dims.d_model, ParameterGroup.ENC_EE)
        specs += _ffn(f"{prefix}.ffn", dims, ParameterGroup.ENC_FFN)
        specs += _norm(f"{prefix}.norm1", dims.d_model)
        specs += _norm(f"{prefix}.norm2", dims.d_model)

    for layer in range(dims.n_layers_dec):
        prefix = f"decoder.{layer}"
        specs += _attention(f"{prefix}.self_attn", dims.d_model, ParameterGroup.DEC_DD)
        specs += _attention(f"{prefix}.cross_attn", dims.d_model, ParameterGroup.DEC_ED)
        specs += _ffn(f"{prefix}.ffn", dims, ParameterGroup.DEC_FFN)
        specs += _norm(f"{prefix}.norm1", dims.d_model)
        specs += _norm(f"{prefix}.norm2", dims.d_model)
        specs += _norm(f"{prefix}.norm3", dims.d_model)

    return specs


def target_matrices(dims: ModelDims) -> list[ParamSpec]:
    return [spec for spec in model_layout(dims) if spec.is_target]


def group_matrices(dims: ModelDims, group: ParameterGroup) -> list[ParamSpec]:
    return [spec for spec in model_layout(dims) if spec.group == group]


def group_param_count(dims: ModelDims, group: ParameterGroup) -> int:
    return sum(spec.numel for spec in group_matrices(dims, group))
