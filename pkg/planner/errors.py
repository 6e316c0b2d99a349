class PlanCoverageError(ValueError):
    """A quantization target has no bit width in the plan"""

    def __init__(self, missing: list[str]):
        self.missing = missing
        shown = ", ".join(missing[:8])
        more = f" (+{len(missing) - 8} more)" if len(missing) > 8 else ""
        super().__init__(f"Plan does not cover: {shown}{more}")


class MissingFrequencyError(ValueError):
    """The plan clusters the embedding by frequency but no frequency table was given"""
