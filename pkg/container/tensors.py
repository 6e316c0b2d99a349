from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class DenseTensor:
    """
    Full-precision row-major matrix (vectors are 1 x n).
    Data is always held as a C-contiguous float32 array of shape (rows, cols).
    """

    name: str
    rows: int
    cols: int
    data: np.ndarray

    def __post_init__(self):
        if not self.name:
            raise ValueError("DenseTensor needs a non-empty name")
        if self.rows < 0 or self.cols < 0:
            raise ValueError(f"Negative shape for {self.name}: {self.rows}x{self.cols}")

        data = np.ascontiguousarray(self.data, dtype=np.float32)
        if data.size != self.rows * self.cols:
            raise ValueError(
                f"{self.name}: data length {data.size} != {self.rows} x {self.cols}"
            )
        # Frozen dataclass, so bypass __setattr__ to store the normalized array
        object.__setattr__(self, "data", data.reshape(self.rows, self.cols))

    @staticmethod
    def from_array(name: str, array: np.ndarray) -> "DenseTensor":
        """Wrap a 1-D or 2-D array; vectors become a single row"""
        array = np.asarray(array, dtype=np.float32)
        if array.ndim == 1:
            array = array.reshape(1, -1)
        if array.ndim != 2:
            raise ValueError(f"{name}: expected 1-D or 2-D data, got {array.ndim}-D")
        return DenseTensor(name, array.shape[0], array.shape[1], array)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.rows, self.cols)

    @property
    def nbytes(self) -> int:
        return 4 * self.rows * self.cols

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.data).all())

    def as_array(self) -> np.ndarray:
        return self.data

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, DenseTensor):
            return NotImplemented
        return (
            self.name == other.name
            and self.shape == other.shape
            and self.data.tobytes() == other.data.tobytes()
        )

    def __hash__(self) -> int:
        return hash((self.name, self.shape))
