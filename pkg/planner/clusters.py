"""
Frequency-clustered embedding bit assignment.

Word vectors sorted by descending corpus frequency are cut into b clusters
whose sizes grow geometrically with ratio r; cluster i gets b - i bits, so
the few most frequent words keep the most bits and the long tail gets 1 bit.
"""

from fractions import Fraction
from math import floor

from pydantic import BaseModel, Field, model_validator

from bcq.quantized import MAX_BITS


class ClusterSpec(BaseModel):
    """Cluster sizes (most frequent first) and their bit widths"""

    sizes: list[int]
    bits: list[int]
    b: int = Field(ge=1, le=MAX_BITS)
    r: float = Field(ge=1.0)

    @model_validator(mode="after")
    def _check(self) -> "ClusterSpec":
        if len(self.sizes) != self.b or len(self.bits) != self.b:
            raise ValueError(f"Expected {self.b} clusters, got sizes={self.sizes}")
        if self.bits != list(range(self.b, 0, -1)):
            raise ValueError(f"Cluster bits must count down from {self.b} to 1")
        if any(size < 0 for size in self.sizes):
            raise ValueError("Cluster sizes must be non-negative")
        return self

    @property
    def vocab_size(self) -> int:
        return sum(self.sizes)

    def row_clusters(self) -> list[tuple[int, int]]:
        """(row_count, bits) runs in frequency-rank order"""
        return [(size, bits) for size, bits in zip(self.sizes, self.bits) if size]


def cluster_embedding(v: int, b: int, r: float) -> ClusterSpec:
    """
    Ideal size of cluster i is v * r^i / sum_k r^k. The first b - 1 clusters
    take the floor of their ideal size; the last (1-bit) cluster takes the rest.
    """
    if not 1 <= b <= MAX_BITS:
        raise ValueError(f"Cluster count b must be in 1..{MAX_BITS}, got {b}")
    if v < b:
        raise ValueError(f"Vocabulary size {v} is smaller than cluster count {b}")
    if r < 1:
        raise ValueError(f"Cluster ratio r must be >= 1, got {r}")

    ratio = Fraction(r)
    total = sum(ratio**k for k in range(b))
    sizes = [floor(v * ratio**i / total) for i in range(b - 1)]
    sizes.append(v - sum(sizes))

    return ClusterSpec(sizes=sizes, bits=list(range(b, 0, -1)), b=b, r=r)


def average_bits_embedding(spec: ClusterSpec) -> float:
    return sum(size * bits for size, bits in zip(spec.sizes, spec.bits)) / spec.vocab_size
