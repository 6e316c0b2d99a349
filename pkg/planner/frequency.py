import logging
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Literal, Mapping

import numpy as np

from planner.clusters import ClusterSpec

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class FrequencyTable:
    """Corpus count per token id, ids dense in [0, vocab_size)"""

    counts: np.ndarray

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64).reshape(-1)
        if (counts < 0).any():
            raise ValueError("Token counts must be non-negative")
        object.__setattr__(self, "counts", counts)

    @property
    def vocab_size(self) -> int:
        return int(self.counts.size)

    @staticmethod
    def from_counts(counts: Mapping[int, int], vocab_size: int) -> "FrequencyTable":
        """Ids missing from counts (unseen tokens) get count 0"""
        table = np.zeros(vocab_size, dtype=np.int64)
        for token_id, count in counts.items():
            if not 0 <= token_id < vocab_size:
                raise ValueError(f"Token id {token_id} outside vocabulary of {vocab_size}")
            table[token_id] = count
        return FrequencyTable(table)

    @staticmethod
    def from_tokens(tokens: Iterable[int], vocab_size: int) -> "FrequencyTable":
        return FrequencyTable.from_counts(Counter(int(t) for t in tokens), vocab_size)

    @staticmethod
    def load(
        path: str | Path,
        vocab_size: int,
        vocab: Mapping[str, int] | None = None,
        fmt: Literal["auto", "counts", "corpus"] = "auto",
    ) -> "FrequencyTable":
        """
        Read either a counts file (one "token<TAB>count" per line) or a raw
        tokenized corpus (whitespace separated tokens). Tokens are integer ids
        unless a vocab mapping is given; tokens outside it are skipped.
        """
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        if fmt == "auto":
            fmt = "counts" if _looks_like_counts(lines) else "corpus"

        def to_id(token: str) -> int | None:
            if vocab is not None:
                return vocab.get(token)
            try:
                return int(token)
            except ValueError:
                return None

        counts: Counter[int] = Counter()
        skipped = 0
        for line in lines:
            if not line.strip():
                continue
            if fmt == "counts":
                token, count = line.rsplit("\t", 1)
                pairs = [(to_id(token), int(count))]
            else:
                pairs = [(to_id(token), 1) for token in line.split()]

            for token_id, count in pairs:
                if token_id is None or not 0 <= token_id < vocab_size:
                    skipped += 1
                    continue
                counts[token_id] += count

        if skipped:
            logger.warning("skipped %d out-of-vocabulary tokens in %s", skipped, path)
        return FrequencyTable.from_counts(counts, vocab_size)


def _looks_like_counts(lines: list[str]) -> bool:
    content = [line for line in lines if line.strip()]
    if not content:
        return False
    for line in content:
        parts = line.split("\t")
        if len(parts) != 2 or not parts[1].strip().isdigit():
            return False
    return True


@dataclass(frozen=True, eq=False)
class WordBits:
    """
    order[k] is the token id at frequency rank k; sorted_bits[k] is its width.
    """

    order: np.ndarray
    sorted_bits: np.ndarray

    def bits_by_token(self) -> np.ndarray:
        """Bit width per token id, i.e. per embedding row in id order"""
        by_token = np.empty_like(self.sorted_bits)
        by_token[self.order] = self.sorted_bits
        return by_token


def assign_word_bits(freq: FrequencyTable, spec: ClusterSpec) -> WordBits:
    """Sort by descending count (ties: ascending id) and hand out cluster bits in rank order"""
    if freq.vocab_size != spec.vocab_size:
        raise ValueError(
            f"Frequency table covers {freq.vocab_size} tokens, "
            f"cluster spec covers {spec.vocab_size}"
        )

    ids = np.arange(freq.vocab_size)
    # lexsort uses the last key as primary
    order = np.lexsort((ids, -freq.counts))
    sorted_bits = np.repeat(np.asarray(spec.bits, dtype=np.int64), spec.sizes)
    return WordBits(order, sorted_bits)
