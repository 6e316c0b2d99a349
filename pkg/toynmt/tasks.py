from dataclasses import dataclass

import numpy as np
import torch

from planner.frequency import FrequencyTable

PAD = 0
BOS = 1
EOS = 2
FIRST_WORD = 3  # ids below this are special tokens


@dataclass(frozen=True)
class Batch:
    source: torch.Tensor  # (batch, src_len)
    target_in: torch.Tensor  # (batch, tgt_len), starts with BOS
    target_out: torch.Tensor  # (batch, tgt_len), ends with EOS

    @property
    def size(self) -> int:
        return self.source.shape[0]


class BaseTask:
    """
    Synthetic sequence-to-sequence task over word ids FIRST_WORD..vocab_size-1.
    With zipf_exponent set, word ids are drawn with probability ~ rank^-s so
    low ids are frequent, like a real vocabulary. noise is the probability
    that a target word is replaced by a random one, which keeps the best
    reachable loss above zero.
    """

    def __init__(
        self,
        vocab_size: int,
        seq_len: int = 8,
        zipf_exponent: float | None = None,
        noise: float = 0.0,
    ):
        if vocab_size <= FIRST_WORD:
            raise ValueError(f"Vocabulary of {vocab_size} leaves no word ids")
        if seq_len < 1:
            raise ValueError(f"seq_len must be positive, got {seq_len}")
        if not 0.0 <= noise < 1.0:
            raise ValueError(f"noise must be in [0, 1), got {noise}")

        self.vocab_size: int = vocab_size
        self.seq_len: int = seq_len
        self.noise: float = noise

        n_words = vocab_size - FIRST_WORD
        if zipf_exponent is None:
            self.word_probs: np.ndarray = np.full(n_words, 1.0 / n_words)
        else:
            weights = np.arange(1, n_words + 1, dtype=np.float64) ** -zipf_exponent
            self.word_probs = weights / weights.sum()

    def target_for(self, source: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def sample(self, batch_size: int, rng: np.random.Generator) -> Batch:
        words = rng.choice(
            np.arange(FIRST_WORD, self.vocab_size),
            size=(batch_size, self.seq_len),
            p=self.word_probs,
        )
        target = self.target_for(words)
        if self.noise > 0.0:
            flip = rng.random(target.shape) < self.noise
            random_words = rng.integers(FIRST_WORD, self.vocab_size, size=target.shape)
            target = np.where(flip, random_words, target)

        bos = np.full((batch_size, 1), BOS, dtype=np.int64)
        eos = np.full((batch_size, 1), EOS, dtype=np.int64)
        return Batch(
            source=torch.as_tensor(np.hstack([words, eos]), dtype=torch.long),
            target_in=torch.as_tensor(np.hstack([bos, target]), dtype=torch.long),
            target_out=torch.as_tensor(np.hstack([target, eos]), dtype=torch.long),
        )

    def eval_batch(self, size: int, seed: int) -> Batch:
        """Fixed held-out batch; the same seed always gives the same batch"""
        return self.sample(size, np.random.default_rng(seed))

    def frequencies(self, n_sentences: int, seed: int = 0) -> FrequencyTable:
        """Token counts over sampled source and target sentences"""
        batch = self.sample(n_sentences, np.random.default_rng(seed))
        tokens = torch.cat(
            [batch.source.flatten(), batch.target_out.flatten(), batch.target_in[:, :1].flatten()]
        )
        return FrequencyTable.from_tokens(tokens.tolist(), self.vocab_size)


class CopyTask(BaseTask):
    # Target is the source sentence unchanged
    def target_for(self, source: np.ndarray) -> np.ndarray:
        return source.copy()


class ReverseTask(BaseTask):
    # Target is the source sentence backwards
    def target_for(self, source: np.ndarray) -> np.ndarray:
        return source[:, ::-1].copy()


TASKS: dict[str, type[BaseTask]] = {
    "copy": CopyTask,
    "reverse": ReverseTask,
}


def make_task(name: str, vocab_size: int, **kwargs) -> BaseTask:
    task_class = TASKS.get(name)
    if task_class is None:
        raise ValueError(f"Unknown task {name!r}; choose from {', '.join(TASKS)}")
    return task_class(vocab_size, **kwargs)
