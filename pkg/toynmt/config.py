from pydantic import BaseModel, Field, model_validator

from planner.groups import ModelDims


class ToyModelConfig(BaseModel):
    """Desk-scale encoder-decoder; the base configuration scaled down"""

    d_model: int = Field(64, ge=1)
    d_ffn: int = Field(256, ge=1)
    n_layers_enc: int = Field(2, ge=0)
    n_layers_dec: int = Field(2, ge=0)
    n_heads: int = Field(4, ge=1)
    vocab_size: int = Field(64, ge=4)
    max_seq_len: int = Field(32, ge=2)

    @model_validator(mode="after")
    def _heads_divide_width(self) -> "ToyModelConfig":
        if self.d_model % self.n_heads:
            raise ValueError(
                f"d_model ({self.d_model}) must be divisible by n_heads ({self.n_heads})"
            )
        return self

    @property
    def dims(self) -> ModelDims:
        return ModelDims(
            d_model=self.d_model,
            d_ffn=self.d_ffn,
            n_layers_enc=self.n_layers_enc,
            n_layers_dec=self.n_layers_dec,
            vocab_size=self.vocab_size,
        )


class TrainSchedule(BaseModel):
    """
    Retraining schedule. lr follows
        c_lr * d_model^d_model_exponent * min(step^-0.5, steps_peak^-0.5)
    i.e. a constant stage up to steps_peak, then inverse square-root decay.
    """

    pnr: int = Field(50, ge=1)  # mini-batch updates between quantization projections
    total_steps: int = Field(400, ge=0)
    c_lr: float = Field(0.002, gt=0)
    steps_peak: int = Field(100, ge=1)
    d_model_exponent: float = 0.5
    d_model: int = Field(64, ge=1)
    batch_size: int = Field(32, ge=1)
