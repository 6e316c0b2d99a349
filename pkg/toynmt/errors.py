class DivergenceError(RuntimeError):
    """Training loss became NaN or Inf"""

    def __init__(self, step: int, loss: float, lr: float):
        self.step = step
        self.loss = loss
        self.lr = lr
        super().__init__(f"Loss diverged to {loss} at step {step} (lr {lr:.3g})")


class PhaseOrderError(ValueError):
    """A retraining phase un-quantizes a group an earlier phase quantized"""


class EmptyGroupError(ValueError):
    """A parameter group has no weights in this model"""
