"""
Transformer building blocks whose weight products can run on packed
binary-code weights.

Every Linear holds an ordinary float weight (out, in) and bias. When a
QuantizedTensor is attached, forward computes W x with the chosen packed
GEMV kernel one token vector at a time instead of with the float weight.
"""

import math
from enum import Enum

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from bcq.quantized import QuantizedTensor
from kernel.gemv import gemv_direct
from kernel.lut import DEFAULT_MU, gemv_lut


class Kernel(Enum):
    DIRECT = "direct"
    LUT = "lut"


def packed_linear(
    t: QuantizedTensor,
    x: torch.Tensor,
    bias: torch.Tensor | None = None,
    kernel: Kernel = Kernel.DIRECT,
    mu: int = DEFAULT_MU,
) -> torch.Tensor:
    """x (..., cols) -> (..., rows) through a packed kernel; no autograd"""
    flat = x.detach().reshape(-1, x.shape[-1]).cpu().numpy().astype(np.float32)
    if kernel == Kernel.LUT:
        rows = [gemv_lut(t, vector, mu=mu) for vector in flat]
    else:
        rows = [gemv_direct(t, vector) for vector in flat]
    out = np.stack(rows) if rows else np.zeros((0, t.rows), dtype=np.float32)

    y = torch.from_numpy(out).reshape(*x.shape[:-1], t.rows).to(x.dtype)
    if bias is not None:
        y = y + bias.detach()
    return y


class Linear(nn.Module):
    def __init__(self, in_features: int, out_features: int):
        super().__init__()
        self.weight = nn.Parameter(torch.empty(out_features, in_features))
        self.bias = nn.Parameter(torch.zeros(out_features))
        nn.init.xavier_uniform_(self.weight)

        self.quantized: QuantizedTensor | None = None
        self.kernel: Kernel = Kernel.DIRECT
        self.mu: int = DEFAULT_MU

    def attach(self, t: QuantizedTensor, kernel: Kernel, mu: int = DEFAULT_MU) -> None:
        if t.shape != tuple(self.weight.shape):
            raise ValueError(f"{t.name}: packed shape {t.shape} != {tuple(self.weight.shape)}")
        self.quantized = t
        self.kernel = kernel
        self.mu = mu

    def detach_quantized(self) -> None:
        self.quantized = None

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if self.quantized is None:
            return F.linear(x, self.weight, self.bias)
        return packed_linear(self.quantized, x, self.bias, self.kernel, self.mu)


class MultiHeadAttention(nn.Module):
    def __init__(self, d_model: int, n_heads: int):
        super().__init__()
        self.n_heads = n_heads
        self.d_head = d_model // n_heads
        self.q = Linear(d_model, d_model)
        self.k = Linear(d_model, d_model)
        self.v = Linear(d_model, d_model)
        self.o = Linear(d_model, d_model)

    def _split(self, x: torch.Tensor) -> torch.Tensor:
        batch, length, _ = x.shape
        return x.view(batch, length, self.n_heads, self.d_head).transpose(1, 2)

    def forward(
        self,
        query: torch.Tensor,
        memory: torch.Tensor,
        causal: bool = False,
    ) -> torch.Tensor:
        batch, length, d_model = query.shape
        q = self._split(self.q(query))
        k = self._split(self.k(memory))
        v = self._split(self.v(memory))

        scores = q @ k.transpose(-2, -1) / math.sqrt(self.d_head)
        if causal:
            mask = torch.ones(length, memory.shape[1], dtype=torch.bool).triu(1)
            scores = scores.masked_fill(mask, float("-inf"))

        context = torch.softmax(scores, dim=-1) @ v
        context = context.transpose(1, 2).reshape(batch, length, d_model)
        return self.o(context)


class FeedForward(nn.Module):
    def __init__(self, d_model: int, d_ffn: int):
        super().__init__()
        self.w1 = Linear(d_model, d_ffn)
        self.w2 = Linear(d_ffn, d_model)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.w2(torch.relu(self.w1(x)))


# Post-norm layers: x = norm(x + sublayer(x))
class EncoderLayer(nn.Module):
    def __init__(self, d_model: int, d_ffn: int, n_heads: int):
        super().__init__()
        self.self_attn = MultiHeadAttention(d_model, n_heads)
        self.ffn = FeedForward(d_model, d_ffn)
        self.norm1 = nn.LayerNorm(d_model)
        self.norm2 = nn.LayerNorm(d_model)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = self.norm1(x + self.self_attn(x, x))
        return self.norm2(x + self.ffn(x))


class DecoderLayer(nn.Module):
    def __init__(self, d_model: int, d_ffn: int, n_heads: int):
        super().__init__()
        self.self_attn = MultiHeadAttention(d_model, n_heads)
        self.cross_attn = MultiHeadAttention(d_model, n_heads)
        self.ffn = FeedForward(d_model, d_ffn)
        self.norm1 = nn.LayerNorm(d_model)
        self.norm2 = nn.LayerNorm(d_model)
        self.norm3 = nn.LayerNorm(d_model)

    def forward(self, x: torch.Tensor, memory: torch.Tensor) -> torch.Tensor:
        x = self.norm1(x + self.self_attn(x, x, causal=True))
        x = self.norm2(x + self.cross_attn(x, memory))
        return self.norm3(x + self.ffn(x))
