import math

import torch
import torch.nn.functional as F
from torch import nn

from bcq.greedy import dequantize
from bcq.quantized import QuantizedTensor
from kernel.lut import DEFAULT_MU
from toynmt.config import ToyModelConfig
from toynmt.layers import DecoderLayer, EncoderLayer, Kernel, packed_linear


def sinusoid_positions(length: int, d_model: int) -> torch.Tensor:
    position = torch.arange(length, dtype=torch.float32)[:, None]
    rate = torch.exp(
        torch.arange(0, d_model, 2, dtype=torch.float32) * (-math.log(10000.0) / d_model)
    )
    table = torch.zeros(length, d_model)
    table[:, 0::2] = torch.sin(position * rate)
    table[:, 1::2] = torch.cos(position * rate)[:, : d_model // 2]
    return table


class ToyTransformer(nn.Module):
    """
    Post-norm encoder-decoder with one embedding matrix shared by the source,
    the target and the output projection (logits = E h).
    """

    def __init__(self, config: ToyModelConfig):
        super().__init__()
        self.config = config
        self.embedding = nn.Embedding(config.vocab_size, config.d_model)
        nn.init.normal_(self.embedding.weight, std=0.02)

        self.encoder = nn.ModuleList(
            EncoderLayer(config.d_model, config.d_ffn, config.n_heads)
            for _ in range(config.n_layers_enc)
        )
        self.decoder = nn.ModuleList(
            DecoderLayer(config.d_model, config.d_ffn, config.n_heads)
            for _ in range(config.n_layers_dec)
        )
        self.register_buffer(
            "positions",
            sinusoid_positions(config.max_seq_len, config.d_model),
            persistent=False,
        )

        self.embedding_quantized: QuantizedTensor | None = None
        self._embedding_lookup: torch.Tensor | None = None
        self.kernel: Kernel = Kernel.DIRECT
        self.mu: int = DEFAULT_MU

    def attach_embedding(self, t: QuantizedTensor, kernel: Kernel, mu: int = DEFAULT_MU) -> None:
        if t.shape != tuple(self.embedding.weight.shape):
            raise ValueError(f"{t.name}: packed shape {t.shape} != {tuple(self.embedding.weight.shape)}")
        self.embedding_quantized = t
        # Lookups only read rows, so they use the reconstructed table
        self._embedding_lookup = torch.from_numpy(dequantize(t).data.copy())
        self.kernel = kernel
        self.mu = mu

    def detach_embedding(self) -> None:
        self.embedding_quantized = None
        self._embedding_lookup = None

    def embed(self, tokens: torch.Tensor) -> torch.Tensor:
        length = tokens.shape[1]
        if length > self.config.max_seq_len:
            raise ValueError(f"Sequence of {length} tokens exceeds max_seq_len {self.config.max_seq_len}")

        if self._embedding_lookup is not None:
            vectors = F.embedding(tokens, self._embedding_lookup.to(self.positions.dtype))
        else:
            vectors = self.embedding(tokens)
        return vectors * math.sqrt(self.config.d_model) + self.positions[:length]

    def encode(self, source: torch.Tensor) -> torch.Tensor:
        x = self.embed(source)
        for layer in self.encoder:
            x = layer(x)
        return x

    def decode(self, target_in: torch.Tensor, memory: torch.Tensor) -> torch.Tensor:
        x = self.embed(target_in)
        for layer in self.decoder:
            x = layer(x, memory)
        return x

    def output_logits(self, hidden: torch.Tensor) -> torch.Tensor:
        if self.embedding_quantized is not None:
            return packed_linear(self.embedding_quantized, hidden, None, self.kernel, self.mu)
        return hidden @ self.embedding.weight.T

    def forward(self, source: torch.Tensor, target_in: torch.Tensor) -> torch.Tensor:
        """(batch, src_len), (batch, tgt_len) -> logits (batch, tgt_len, vocab)"""
        return self.output_logits(self.decode(target_in, self.encode(source)))
