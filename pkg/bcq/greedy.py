"""
Greedy binary-code quantization.

A row w is approximated as sum_i alpha_i * b_i with b_i in {-1, +1}^p,
built one plane at a time from the running residual:

    r_1 = w
    b_i = sign(r_i)          (sign(0) = +1)
    alpha_i = mean(|r_i|)
    r_{i+1} = r_i - alpha_i * b_i
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Sequence

import numpy as np

from bcq.quantized import (
    MAX_BITS,
    QuantizedRow,
    QuantizedTensor,
    RowClusters,
    clusters_from_row_bits,
    validate_clusters,
)
from container.tensors import DenseTensor
from kernel.packing import pack_plane, unpack_plane, words_per_row

logger = logging.getLogger(__name__)


def _check_bits(q: int) -> None:
    if not 1 <= q <= MAX_BITS:
        raise ValueError(f"Bit count must be in 1..{MAX_BITS}, got {q}")


def _greedy_rows(block: np.ndarray, q: int) -> tuple[np.ndarray, np.ndarray]:
    """
    Run the greedy recursion on every row of block at once.
    Returns packed codes (n, q, words) and float32 scales (n, q).
    """
    n, p = block.shape
    residual = block.astype(np.float64, copy=True)
    codes = np.empty((n, q, words_per_row(p)), dtype=np.uint32)
    scales = np.empty((n, q), dtype=np.float32)

    for plane in range(q):
        positive = residual >= 0
        # round alpha first so the stored scale is exactly the one subtracted
        alpha = np.abs(residual).mean(axis=1).astype(np.float32)
        codes[:, plane, :] = pack_plane(positive)
        scales[:, plane] = alpha
        residual -= np.where(positive, 1.0, -1.0) * alpha.astype(np.float64)[:, None]

    return codes, scales


def greedy_quantize_vector(w: Sequence[float] | np.ndarray, q: int) -> QuantizedRow:
    w = np.asarray(w, dtype=np.float32)
    if w.ndim != 1 or w.size == 0:
        raise ValueError("greedy_quantize_vector needs a non-empty vector")
    _check_bits(q)
    if not np.isfinite(w).all():
        raise ValueError("Cannot quantize a vector with NaN or Inf entries")

    codes, scales = _greedy_rows(w.reshape(1, -1), q)
    return QuantizedRow(w.size, q, codes[0], scales[0])


def _chunks(start: int, stop: int, pieces: int) -> list[tuple[int, int]]:
    bounds = np.linspace(start, stop, num=max(1, pieces) + 1).astype(int)
    return [(a, b) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


def quantize_matrix(
    weights: DenseTensor, bits_per_row: RowClusters, threads: int = 1
) -> QuantizedTensor:
    """
    Quantize every row of weights independently, with the bit width of the
    cluster the row falls in. threads > 1 splits clusters into row chunks;
    the result is identical to the sequential one.
    """
    clusters = validate_clusters(bits_per_row, weights.rows)
    if weights.cols < 1:
        raise ValueError(f"{weights.name}: cannot quantize a matrix with no columns")
    if not weights.is_finite():
        raise ValueError(f"{weights.name}: cannot quantize NaN or Inf weights")

    jobs: list[tuple[int, int, int]] = []
    start = 0
    for row_count, bits in clusters:
        for a, b in _chunks(start, start + row_count, threads):
            jobs.append((a, b, bits))
        start += row_count

    def run(job: tuple[int, int, int]) -> tuple[int, np.ndarray, np.ndarray]:
        a, b, bits = job
        codes, scales = _greedy_rows(weights.data[a:b], bits)
        return bits, codes, scales

    if threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(run, jobs))
    else:
        parts = [run(job) for job in jobs]

    tensor = QuantizedTensor.assemble(weights.name, weights.cols, parts)
    logger.debug(
        "quantized %s (%dx%d) at %.3f avg bits",
        weights.name,
        weights.rows,
        weights.cols,
        tensor.average_bits,
    )
    return tensor


def quantize_rows(
    weights: DenseTensor, row_bits: Sequence[int], threads: int = 1
) -> QuantizedTensor:
    """Quantize with an explicit bit width per row (e.g. frequency-assigned embeddings)"""
    if len(row_bits) != weights.rows:
        raise ValueError(
            f"{weights.name}: {len(row_bits)} row bit widths for {weights.rows} rows"
        )
    return quantize_matrix(weights, clusters_from_row_bits(row_bits), threads=threads)


def dequantize(t: QuantizedTensor) -> DenseTensor:
    out = np.zeros((t.rows, t.cols), dtype=np.float32)
    for plane, words in enumerate(t.planes):
        owners = t.plane_owners(plane)
        signs = np.where(unpack_plane(words, t.cols), 1.0, -1.0).astype(np.float32)
        out[owners] += t.scales[owners, plane][:, None] * signs
    return DenseTensor(t.name, t.rows, t.cols, out)


def quantization_error(weights: DenseTensor, t: QuantizedTensor) -> float:
    """Frobenius norm of weights - dequantize(t)"""
    if weights.shape != t.shape:
        raise ValueError(f"Shape mismatch: {weights.shape} vs {t.shape}")
    diff = weights.data.astype(np.float64) - dequantize(t).data.astype(np.float64)
    return float(np.linalg.norm(diff))
