import numpy as np
import pytest
import torch

from toynmt.config import ToyModelConfig, TrainSchedule
from toynmt.model import ToyTransformer
from toynmt.retrain import train_dense
from toynmt.tasks import CopyTask


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_config() -> ToyModelConfig:
    return ToyModelConfig(
        d_model=16, d_ffn=32, n_layers_enc=1, n_layers_dec=1, n_heads=2, vocab_size=24, max_seq_len=12
    )


@pytest.fixture
def tiny_model(tiny_config: ToyModelConfig) -> ToyTransformer:
    torch.manual_seed(0)
    return ToyTransformer(tiny_config)


@pytest.fixture(scope="session")
def trained_copy_model() -> tuple[ToyTransformer, CopyTask]:
    """Toy model briefly trained on the copy task; copy it before mutating"""
    torch.manual_seed(0)
    config = ToyModelConfig(d_model=32, d_ffn=64, n_layers_enc=1, n_layers_dec=1, n_heads=4, vocab_size=32)
    model = ToyTransformer(config)
    task = CopyTask(config.vocab_size, seq_len=6)
    train_dense(model, task, TrainSchedule(total_steps=150, d_model=32, batch_size=32), seed=0)
    return model, task
