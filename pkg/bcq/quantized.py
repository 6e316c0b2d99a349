from dataclasses import dataclass
from typing import Sequence

import numpy as np

from kernel.packing import unpack_row, words_per_row

MAX_BITS = 8

# Run-length bit widths over consecutive rows: [(row_count, bits), ...]
RowClusters = Sequence[tuple[int, int]]


def validate_clusters(clusters: RowClusters, rows: int) -> tuple[tuple[int, int], ...]:
    normalized: list[tuple[int, int]] = []
    for row_count, bits in clusters:
        row_count, bits = int(row_count), int(bits)
        if row_count < 0:
            raise ValueError(f"Cluster row count must be >= 0, got {row_count}")
        if not 1 <= bits <= MAX_BITS:
            raise ValueError(f"Cluster bits must be in 1..{MAX_BITS}, got {bits}")
        if row_count:
            normalized.append((row_count, bits))

    covered = sum(count for count, _ in normalized)
    if covered != rows:
        raise ValueError(f"Clusters cover {covered} rows, matrix has {rows}")
    return tuple(normalized)


def clusters_from_row_bits(row_bits: Sequence[int]) -> list[tuple[int, int]]:
    """Run-length encode a per-row bit vector"""
    runs: list[tuple[int, int]] = []
    for bits in row_bits:
        bits = int(bits)
        if runs and runs[-1][1] == bits:
            runs[-1] = (runs[-1][0] + 1, bits)
        else:
            runs.append((1, bits))
    return runs


@dataclass(frozen=True, eq=False)
class QuantizedRow:
    """
    One row approximated as sum_i scales[i] * code_i.
    codes holds the packed +/-1 planes, shape (bits, words).
    """

    length: int
    bits: int
    codes: np.ndarray
    scales: np.ndarray

    def __post_init__(self):
        if self.length < 1:
            raise ValueError("QuantizedRow length must be >= 1")
        if not 1 <= self.bits <= MAX_BITS:
            raise ValueError(f"QuantizedRow bits must be in 1..{MAX_BITS}")
        if self.codes.shape != (self.bits, words_per_row(self.length)):
            raise ValueError(f"codes shape {self.codes.shape} does not fit the row")
        if self.scales.shape != (self.bits,):
            raise ValueError(f"scales shape {self.scales.shape} != ({self.bits},)")

    def code(self, plane: int) -> np.ndarray:
        return unpack_row(self.codes[plane], self.length)

    def reconstruct(self) -> np.ndarray:
        out = np.zeros(self.length, dtype=np.float32)
        for plane in range(self.bits):
            out += self.scales[plane] * self.code(plane).astype(np.float32)
        return out


@dataclass(frozen=True, eq=False)
class QuantizedTensor:
    """
    A matrix quantized row by row with per-row bit widths.

    planes[i] holds, in row order, the packed code words of every row that
    owns plane i (rows with more than i bits): shape (owners_i, words).
    scales is (rows, q_max) float32; entries past a row's own bit width are 0.
    """

    name: str
    rows: int
    cols: int
    clusters: tuple[tuple[int, int], ...]
    planes: tuple[np.ndarray, ...]
    scales: np.ndarray

    def __post_init__(self):
        if not self.name:
            raise ValueError("QuantizedTensor needs a non-empty name")
        if self.cols < 1:
            raise ValueError(f"{self.name}: quantized tensors need cols >= 1")

        clusters = validate_clusters(self.clusters, self.rows)
        object.__setattr__(self, "clusters", clusters)

        row_bits = self.row_bits
        q_max = int(row_bits.max()) if self.rows else 0
        if len(self.planes) != q_max:
            raise ValueError(f"{self.name}: {len(self.planes)} planes, expected {q_max}")

        n_words = words_per_row(self.cols)
        for plane, words in enumerate(self.planes):
            owners = int((row_bits > plane).sum())
            if words.shape != (owners, n_words):
                raise ValueError(
                    f"{self.name}: plane {plane} has shape {words.shape}, "
                    f"expected ({owners}, {n_words})"
                )
        if self.scales.shape != (self.rows, q_max):
            raise ValueError(f"{self.name}: scales shape {self.scales.shape} is wrong")

    @staticmethod
    def assemble(
        name: str,
        cols: int,
        parts: Sequence[tuple[int, np.ndarray, np.ndarray]],
    ) -> "QuantizedTensor":
        """
        Build a tensor from consecutive row blocks.
        Each part is (bits, codes (n, bits, words), scales (n, bits)).
        """
        parts = [part for part in parts if part[1].shape[0] > 0]
        # adjacent blocks of the same width form one run
        clusters: list[tuple[int, int]] = []
        for bits, codes, _ in parts:
            if clusters and clusters[-1][1] == bits:
                clusters[-1] = (clusters[-1][0] + codes.shape[0], bits)
            else:
                clusters.append((codes.shape[0], bits))
        rows = sum(count for count, _ in clusters)
        q_max = max((bits for _, bits in clusters), default=0)
        n_words = words_per_row(cols)

        planes: list[np.ndarray] = []
        for plane in range(q_max):
            owned = [codes[:, plane, :] for bits, codes, _ in parts if bits > plane]
            stacked = np.concatenate(owned, axis=0).reshape(-1, n_words)
            planes.append(np.ascontiguousarray(stacked, dtype=np.uint32))

        scales = np.zeros((rows, q_max), dtype=np.float32)
        start = 0
        for bits, codes, part_scales in parts:
            count = codes.shape[0]
            scales[start : start + count, :bits] = part_scales
            start += count

        return QuantizedTensor(name, rows, cols, tuple(clusters), tuple(planes), scales)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.rows, self.cols)

    @property
    def row_bits(self) -> np.ndarray:
        counts = [count for count, _ in self.clusters]
        bits = [b for _, b in self.clusters]
        return np.repeat(np.asarray(bits, dtype=np.int64), counts)

    @property
    def q_max(self) -> int:
        return len(self.planes)

    @property
    def average_bits(self) -> float:
        if not self.rows:
            return 0.0
        return float(self.row_bits.mean())

    def plane_owners(self, plane: int) -> np.ndarray:
        return np.flatnonzero(self.row_bits > plane)

    def owned_scales(self) -> np.ndarray:
        """Scales of every row in row-major, plane-minor order (no padding)"""
        mask = np.arange(self.q_max)[None, :] < self.row_bits[:, None]
        return self.scales[mask]

    def row(self, index: int) -> QuantizedRow:
        if not 0 <= index < self.rows:
            raise IndexError(f"{self.name}: row {index} out of range")

        row_bits = self.row_bits
        bits = int(row_bits[index])
        codes = np.empty((bits, words_per_row(self.cols)), dtype=np.uint32)
        for plane in range(bits):
            # position of this row among the owners of the plane
            position = int((row_bits[:index] > plane).sum())
            codes[plane] = self.planes[plane][position]
        return QuantizedRow(self.cols, bits, codes, self.scales[index, :bits].copy())

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, QuantizedTensor):
            return NotImplemented
        return (
            self.name == other.name
            and self.shape == other.shape
            and self.clusters == other.clusters
            and len(self.planes) == len(other.planes)
            and all(a.tobytes() == b.tobytes() for a, b in zip(self.planes, other.planes))
            and self.owned_scales().tobytes() == other.owned_scales().tobytes()
        )

    def __hash__(self) -> int:
        return hash((self.name, self.shape, self.clusters))
