"""
GEMV microbenchmark: in-repo dense baseline vs the two packed kernels.

Kernel outputs are compared before anything is timed; a mismatch aborts the
run. Timings are medians over repeated calls after a short warmup.
"""

import statistics
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from bcq.greedy import dequantize, quantize_matrix
from container.tensors import DenseTensor
from kernel.gemv import gemv_dense, gemv_direct, memory_footprint
from kernel.lut import build_lut, gemv_lut

WARMUP_CALLS = 3
DEFAULT_ITERS = 100


class KernelMismatchError(RuntimeError):
    pass


@dataclass(frozen=True)
class BenchReport:
    kernel: str
    rows: int
    cols: int
    q: int
    mu: int | None
    median_seconds: float
    iterations: int
    bytes_touched: int
    speedup: float  # dense median / this median

    def describe(self) -> str:
        mu = "-" if self.mu is None else str(self.mu)
        return (
            f"{self.kernel:<7} {self.rows}x{self.cols} q={self.q} mu={mu:<2} "
            f"median {self.median_seconds * 1e6:10.1f} us  "
            f"{self.bytes_touched:>10d} B  x{self.speedup:.2f}"
        )


def time_calls(fn: Callable[[], object], iters: int) -> float:
    """Median wall time of fn over iters calls"""
    for _ in range(WARMUP_CALLS):
        fn()
    samples = []
    for _ in range(iters):
        start = time.perf_counter()
        fn()
        samples.append(time.perf_counter() - start)
    return statistics.median(samples)


def check_agreement(reference: np.ndarray, other: np.ndarray, what: str) -> None:
    atol = 1e-5 * max(1.0, float(np.abs(reference).max(initial=0.0)))
    if not np.allclose(other, reference, rtol=1e-5, atol=atol):
        worst = float(np.abs(other - reference).max())
        raise KernelMismatchError(f"{what} disagrees with gemv_direct (max diff {worst:.3g})")


def run_bench(
    rows: int,
    cols: int,
    q: int,
    mu: int = 8,
    iters: int = DEFAULT_ITERS,
    seed: int = 0,
    threads: int = 1,
) -> list[BenchReport]:
    if rows < 1 or cols < 1:
        raise ValueError(f"Benchmark needs positive dims, got {rows}x{cols}")
    if iters < 1:
        raise ValueError(f"Need at least one timed iteration, got {iters}")

    rng = np.random.default_rng(seed)
    weights = DenseTensor("bench", rows, cols, rng.standard_normal((rows, cols)))
    x = rng.standard_normal(cols).astype(np.float32)
    t = quantize_matrix(weights, [(rows, q)], threads=threads)
    reconstructed = dequantize(t).data

    direct = gemv_direct(t, x)
    check_agreement(direct, gemv_lut(t, x, mu=mu), "gemv_lut")
    check_agreement(direct, gemv_dense(reconstructed, x), "dense GEMV on the reconstruction")

    lut_bytes = build_lut(x, mu).tables.nbytes
    dense_time = time_calls(lambda: gemv_dense(weights.data, x), iters)
    direct_time = time_calls(lambda: gemv_direct(t, x), iters)
    lut_time = time_calls(lambda: gemv_lut(t, x, mu=mu), iters)

    def report(kernel: str, median: float, nbytes: int, kernel_mu: int | None) -> BenchReport:
        speedup = dense_time / median if median > 0 else float("inf")
        return BenchReport(kernel, rows, cols, q, kernel_mu, median, iters, nbytes, speedup)

    return [
        report("dense", dense_time, weights.nbytes, None),
        report("direct", direct_time, memory_footprint(t), None),
        report("lut", lut_time, memory_footprint(t) + lut_bytes, mu),
    ]
