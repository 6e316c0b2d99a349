"""
Lookup-table GEMV.

x is cut into blocks of mu entries. For every block all 2^mu subset sums
are precomputed once per input vector; a row's mu packed bits for the block
then index the table directly, so b . x becomes a sum of table lookups.
"""

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from bcq.quantized import QuantizedTensor
from kernel.gemv import check_input

DEFAULT_MU = 8
MAX_MU = 16


@dataclass(frozen=True, eq=False)
class LutTable:
    """
    Subset-sum tables for one input vector.
    tables[block, m] = sum of the block's x_j for every bit j set in m.
    """

    mu: int
    tables: np.ndarray  # (blocks, 2**mu) float32
    block_sums: np.ndarray  # (blocks,) float32, equal to tables[:, -1]
    additions: int  # additions performed per block while building

    @property
    def blocks(self) -> int:
        return self.tables.shape[0]


def build_lut(x: Sequence[float] | np.ndarray, mu: int = DEFAULT_MU) -> LutTable:
    if not 1 <= mu <= MAX_MU:
        raise ValueError(f"LUT block length mu must be in 1..{MAX_MU}, got {mu}")

    x = np.asarray(x, dtype=np.float32).reshape(-1)
    blocks = max(1, -(-x.size // mu))
    padded = np.zeros(blocks * mu, dtype=np.float32)
    padded[: x.size] = x
    x_blocks = padded.reshape(blocks, mu)

    tables = np.zeros((blocks, 1 << mu), dtype=np.float32)
    additions = 0
    for k in range(mu):
        width = 1 << k
        # table[m | 2^k] = table[m] + x_k for every m < 2^k
        tables[:, width : 2 * width] = tables[:, :width] + x_blocks[:, k : k + 1]
        additions += width

    return LutTable(mu, tables, tables[:, -1].copy(), additions)


def _block_patterns(words: np.ndarray, mu: int, blocks: int) -> np.ndarray:
    """Integer pattern of each row's mu bits per block: (rows, blocks)"""
    as_bytes = np.ascontiguousarray(words, dtype="<u4").view(np.uint8)
    if mu == 8:
        return as_bytes[:, :blocks].astype(np.intp)

    bits = np.unpackbits(as_bytes, axis=1, bitorder="little")
    needed = blocks * mu
    if bits.shape[1] < needed:
        bits = np.pad(bits, ((0, 0), (0, needed - bits.shape[1])))
    bits = bits[:, :needed].reshape(bits.shape[0], blocks, mu).astype(np.intp)
    return bits @ (np.intp(1) << np.arange(mu, dtype=np.intp))


def gemv_lut(
    t: QuantizedTensor,
    x: Sequence[float] | np.ndarray,
    mu: int = DEFAULT_MU,
    lut: LutTable | None = None,
) -> np.ndarray:
    """
    Same product as gemv_direct, with b . x = sum over blocks of
    2 * table[pattern] - block_sum. A prebuilt lut must come from this x.
    """
    x = check_input(t, x)
    if lut is None:
        lut = build_lut(x, mu)
    elif lut.mu != mu:
        raise ValueError(f"LUT was built with mu={lut.mu}, asked for mu={mu}")

    block_index = np.arange(lut.blocks)[None, :]
    y = np.zeros(t.rows, dtype=np.float32)

    for plane, words in enumerate(t.planes):
        owners = t.plane_owners(plane)
        patterns = _block_patterns(words, mu, lut.blocks)
        picked = lut.tables[block_index, patterns]
        dots = (np.float32(2.0) * picked - lut.block_sums[None, :]).sum(axis=1)
        y[owners] += t.scales[owners, plane] * dots

    return y
