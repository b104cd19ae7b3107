"""
Dense immutable tensor storage.

A Tensor wraps a read-only, C-contiguous numpy array of rank <= 4 in single or
double precision. Operators never modify their inputs; they always return new
tensors, so a Tensor can be handed between threads freely.
"""

# Standard library imports
from typing import Any, Optional, Tuple

# Third-party imports
import numpy as np

# Local imports
from ..exceptions import TensorError

FLOAT32 = np.dtype(np.float32)
FLOAT64 = np.dtype(np.float64)
SUPPORTED_DTYPES = (FLOAT32, FLOAT64)
MAX_RANK = 4


def _coerce_dtype(dtype: Any) -> np.dtype:
    resolved = np.dtype(dtype)
    if resolved not in SUPPORTED_DTYPES:
        raise TensorError(f"Unsupported dtype {resolved}; expected float32 or float64")
    return resolved


class Tensor:
    """
    Immutable dense array with an optional gradient-tracking flag.

    Args:
        data: Anything numpy can turn into an array
        dtype: float32 (default for non-float input) or float64
        requires_grad: Mark as a leaf whose gradient the reverse pass reports
        name: Optional label used in error messages and checkpoints
    """

    __slots__ = ("_data", "requires_grad", "name")

    def __init__(
        self,
        data: Any,
        dtype: Any = None,
        requires_grad: bool = False,
        name: Optional[str] = None,
    ):
        if isinstance(data, Tensor):
            data = data._data
        if dtype is None:
            source = np.asarray(data)
            dtype = source.dtype if source.dtype in SUPPORTED_DTYPES else FLOAT32
        array = np.array(data, dtype=_coerce_dtype(dtype), order="C", copy=True)
        if array.ndim > MAX_RANK:
            raise TensorError(f"Tensor rank {array.ndim} exceeds maximum of {MAX_RANK}")
        array.setflags(write=False)
        self._data = array
        self.requires_grad = requires_grad
        self.name = name

    @classmethod
    def _wrap(cls, array: np.ndarray, requires_grad: bool = False) -> "Tensor":
        """Adopt a freshly computed array without copying it."""
        tensor = cls.__new__(cls)
        if array.dtype not in SUPPORTED_DTYPES:
            array = array.astype(FLOAT32)
        if not array.flags.c_contiguous or not array.flags.owndata:
            array = array.copy(order="C")
        array.setflags(write=False)
        tensor._data = array
        tensor.requires_grad = requires_grad
        tensor.name = None
        return tensor

    @property
    def data(self) -> np.ndarray:
        """Read-only view of the underlying values."""
        return self._data

    @property
    def shape(self) -> Tuple[int, ...]:
        return self._data.shape

    @property
    def dtype(self) -> np.dtype:
        return self._data.dtype

    @property
    def ndim(self) -> int:
        return self._data.ndim

    @property
    def size(self) -> int:
        return int(self._data.size)

    def numpy(self) -> np.ndarray:
        """Writable copy of the values."""
        return self._data.copy()

    def item(self) -> float:
        if self._data.size != 1:
            raise TensorError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self._data.reshape(-1)[0])

    def astype(self, dtype: Any, requires_grad: Optional[bool] = None) -> "Tensor":
        """Copy with a different precision; keeps the gradient flag unless overridden."""
        flag = self.requires_grad if requires_grad is None else requires_grad
        return Tensor(self._data, dtype=dtype, requires_grad=flag, name=self.name)

    def detach(self) -> "Tensor":
        """Same values, never tracked."""
        return Tensor._wrap(self._data, requires_grad=False)

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self._data)))

    def __len__(self) -> int:
        return self.shape[0] if self.ndim else 1

    def __repr__(self) -> str:
        label = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{label})"


def as_tensor(value: Any, dtype: Any = None) -> Tensor:
    """Return ``value`` unchanged if it already is a Tensor, else wrap it."""
    if isinstance(value, Tensor):
        return value
    return Tensor(value, dtype=dtype)
