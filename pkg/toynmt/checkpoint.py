"""
Saving a ToyTransformer as a BCQ1 checkpoint and loading it back.

Tensors are written in model layout order under their state-dict names;
quantized matrices are stored packed, everything else dense. The model
configuration travels in the metadata attributes.
"""

from pathlib import Path
from typing import Any

import torch

from bcq.greedy import dequantize
from bcq.quantized import QuantizedTensor
from container.format import Tensor, read_checkpoint_with_attributes, write_checkpoint
from container.tensors import DenseTensor
from planner.groups import model_layout
from toynmt.config import ToyModelConfig
from toynmt.model import ToyTransformer


def model_tensors(
    model: ToyTransformer, quantized: dict[str, QuantizedTensor] | None = None
) -> list[Tensor]:
    quantized = quantized or {}
    params = dict(model.named_parameters())
    tensors: list[Tensor] = []
    for spec in model_layout(model.config.dims):
        if spec.name in quantized:
            tensors.append(quantized[spec.name])
        else:
            array = params[spec.name].detach().cpu().float().numpy()
            tensors.append(DenseTensor.from_array(spec.name, array))
    return tensors


def model_attributes(model: ToyTransformer) -> dict[str, Any]:
    return {
        "model_config": model.config.model_dump(),
        "dims": model.config.dims.model_dump(),
    }


def save_model(
    model: ToyTransformer,
    path: str | Path,
    quantized: dict[str, QuantizedTensor] | None = None,
    attributes: dict[str, Any] | None = None,
) -> int:
    attrs = model_attributes(model) | (attributes or {})
    return write_checkpoint(model_tensors(model, quantized), path, attrs)


def model_from_tensors(
    tensors: list[Tensor], attributes: dict[str, Any]
) -> tuple[ToyTransformer, dict[str, QuantizedTensor]]:
    if "model_config" not in attributes:
        raise ValueError("Checkpoint has no model_config attribute; not a toy model")
    model = ToyTransformer(ToyModelConfig.model_validate(attributes["model_config"]))
    params = dict(model.named_parameters())

    by_name = {tensor.name: tensor for tensor in tensors}
    missing = sorted(set(params) - set(by_name))
    if missing:
        raise ValueError(f"Checkpoint lacks parameters: {', '.join(missing)}")

    quantized: dict[str, QuantizedTensor] = {}
    with torch.no_grad():
        for name, param in params.items():
            tensor = by_name[name]
            if isinstance(tensor, QuantizedTensor):
                quantized[name] = tensor
                tensor = dequantize(tensor)
            data = torch.from_numpy(tensor.data.copy())
            if data.numel() != param.numel():
                raise ValueError(f"{name}: {tuple(data.shape)} does not fit {tuple(param.shape)}")
            param.copy_(data.reshape(param.shape))
    return model, quantized


def load_model(path: str | Path) -> tuple[ToyTransformer, dict[str, QuantizedTensor]]:
    """Model with float weights (reconstructed where packed) and the packed tensors"""
    tensors, attributes = read_checkpoint_with_attributes(path)
    return model_from_tensors(tensors, attributes)
