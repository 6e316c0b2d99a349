from typing import Sequence

import numpy as np

from bcq.quantized import QuantizedTensor
from kernel.packing import unpack_plane, words_per_row


def check_input(t: QuantizedTensor, x: Sequence[float] | np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float32)
    if x.ndim != 1 or x.shape[0] != t.cols:
        raise ValueError(f"{t.name}: input of shape {x.shape} for {t.cols} columns")
    if not np.isfinite(x).all():
        raise ValueError("GEMV input contains NaN or Inf")
    return x


def gemv_dense(weights: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Dense float32 baseline y = W x"""
    weights = np.asarray(weights, dtype=np.float32)
    x = np.asarray(x, dtype=np.float32)
    if weights.ndim != 2 or x.shape != (weights.shape[1],):
        raise ValueError(f"Cannot multiply {weights.shape} by {x.shape}")
    return weights @ x


def gemv_direct(t: QuantizedTensor, x: Sequence[float] | np.ndarray) -> np.ndarray:
    """
    y[row] = sum over the row's planes of alpha * (b . x), straight from the
    packed planes. b . x is taken as 2 * (sum of x where the bit is set) - sum(x).
    Planes are accumulated in order, in float32.
    """
    x = check_input(t, x)
    total = x.sum(dtype=np.float32)
    y = np.zeros(t.rows, dtype=np.float32)

    for plane, words in enumerate(t.planes):
        owners = t.plane_owners(plane)
        bits = unpack_plane(words, t.cols).astype(np.float32)
        subset = bits @ x
        y[owners] += t.scales[owners, plane] * (np.float32(2.0) * subset - total)

    return y


def footprint_bytes(clusters: Sequence[tuple[int, int]], cols: int) -> int:
    """Packed planes plus one float32 scale per row per plane"""
    per_plane = words_per_row(cols) * 4 + 4
    return sum(int(count) * int(bits) * per_plane for count, bits in clusters)


def memory_footprint(t: QuantizedTensor) -> int:
    return footprint_bytes(t.clusters, t.cols)
