from toynmt.config import TrainSchedule


def lr_at(step: int, s: TrainSchedule) -> float:
    """Learning rate for a 1-based step: flat until steps_peak, then ~ step^-0.5"""
    if step < 1:
        raise ValueError(f"Steps are counted from 1, got {step}")
    scale = s.c_lr * s.d_model**s.d_model_exponent
    return scale * min(step**-0.5, s.steps_peak**-0.5)
