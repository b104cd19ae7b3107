"""
Differentiable operator set.

Every operator is pure: it reads its input tensors, computes a fresh result and,
when a tape is active and an input is tracked, records a vector-Jacobian product
for the reverse pass. Convolutions use the sliding-window (im2col) formulation
with a fixed reduction order so repeated calls are bit-identical.
"""

# Standard library imports
import logging
from typing import Optional, Sequence, Tuple

# Third-party imports
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

# Local imports
from ..exceptions import ShapeError, TensorError
from .tape import record
from .tensor import Tensor, as_tensor

logger = logging.getLogger(__name__)

DEFAULT_LEAKY_SLOPE = 0.2
ACTIVATIONS = ("leaky_relu", "relu", "tanh", "sigmoid")


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _result_dtype(*tensors: Tensor) -> np.dtype:
    return np.result_type(*[t.dtype for t in tensors])


# ---------------------------------------------------------------------------
# Elementwise and structural plumbing
# ---------------------------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = np.add(a.data, b.data, dtype=_result_dtype(a, b))

    def vjp(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return record("add", (a, b), out, vjp)


def sub(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = np.subtract(a.data, b.data, dtype=_result_dtype(a, b))

    def vjp(g):
        return _unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)

    return record("sub", (a, b), out, vjp)


def mul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = np.multiply(a.data, b.data, dtype=_result_dtype(a, b))

    def vjp(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return record("mul", (a, b), out, vjp)


def scale(x: Tensor, factor: float) -> Tensor:
    out = x.data * x.dtype.type(factor)

    def vjp(g):
        return (g * x.dtype.type(factor),)

    return record("scale", (x,), out, vjp)


def reduce_sum(x: Tensor) -> Tensor:
    out = np.sum(x.data, dtype=x.dtype)

    def vjp(g):
        return (np.broadcast_to(g, x.shape).copy(),)

    return record("reduce_sum", (x,), np.asarray(out), vjp)


def mean(x: Tensor) -> Tensor:
    count = max(x.size, 1)
    out = np.sum(x.data, dtype=x.dtype) / x.dtype.type(count)

    def vjp(g):
        return (np.broadcast_to(g / x.dtype.type(count), x.shape).copy(),)

    return record("mean", (x,), np.asarray(out, dtype=x.dtype), vjp)


def log(x: Tensor) -> Tensor:
    out = np.log(x.data)

    def vjp(g):
        return (g / x.data,)

    return record("log", (x,), out, vjp)


def clip(x: Tensor, low: float, high: float) -> Tensor:
    """Clamp values; the gradient passes only where the input was inside [low, high]."""
    out = np.clip(x.data, low, high)

    def vjp(g):
        inside = (x.data >= low) & (x.data <= high)
        return (np.where(inside, g, 0).astype(x.dtype),)

    return record("clip", (x,), out, vjp)


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    out = x.data.reshape(tuple(shape))

    def vjp(g):
        return (g.reshape(x.shape),)

    return record("reshape", (x,), out.copy(), vjp)


def flatten(x: Tensor) -> Tensor:
    """Collapse every axis after the batch axis."""
    return reshape(x, (x.shape[0], -1))


def concat(tensors: Sequence[Tensor], axis: int = 1) -> Tensor:
    tensors = tuple(as_tensor(t) for t in tensors)
    out = np.concatenate([t.data for t in tensors], axis=axis).astype(_result_dtype(*tensors))
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def vjp(g):
        return tuple(np.split(g, bounds, axis=axis))

    return record("concat", tensors, out, vjp)


def embedding(table: Tensor, indices: Sequence[int]) -> Tensor:
    """Gather rows of ``table``; rows that are not gathered receive zero gradient."""
    idx = np.asarray(indices, dtype=np.int64)
    if idx.ndim != 1:
        raise ShapeError(f"embedding indices must be 1-D, got shape {idx.shape}")
    if idx.size and (idx.min() < 0 or idx.max() >= table.shape[0]):
        raise ShapeError(
            f"embedding index out of range for table with {table.shape[0]} rows: {idx.tolist()}"
        )
    out = table.data[idx]

    def vjp(g):
        grad = np.zeros(table.shape, dtype=table.dtype)
        np.add.at(grad, idx, g)
        return (grad,)

    return record("embedding", (table,), out.copy(), vjp)


# ---------------------------------------------------------------------------
# Activations
# ---------------------------------------------------------------------------


def _strict_unit_bounds(dtype: np.dtype) -> Tuple[float, float]:
    info = np.finfo(dtype)
    return float(info.tiny), float(1.0 - info.epsneg)


def leaky_relu(x: Tensor, alpha: float = DEFAULT_LEAKY_SLOPE) -> Tensor:
    if not 0.0 < alpha < 1.0:
        raise TensorError(f"leaky_relu slope must lie in (0, 1), got {alpha}")
    slope = x.dtype.type(alpha)
    positive = x.data > 0
    out = np.where(positive, x.data, x.data * slope)

    def vjp(g):
        return (np.where(positive, g, g * slope),)

    return record("leaky_relu", (x,), out, vjp)


def relu(x: Tensor) -> Tensor:
    positive = x.data > 0
    out = np.where(positive, x.data, x.dtype.type(0))

    def vjp(g):
        return (np.where(positive, g, 0).astype(g.dtype),)

    return record("relu", (x,), out, vjp)


def tanh(x: Tensor) -> Tensor:
    _, upper = _strict_unit_bounds(x.dtype)
    out = np.clip(np.tanh(x.data), -upper, upper).astype(x.dtype)

    def vjp(g):
        return (g * (1 - out * out),)

    return record("tanh", (x,), out, vjp)


def sigmoid(x: Tensor) -> Tensor:
    lower, upper = _strict_unit_bounds(x.dtype)
    decay = np.exp(-np.abs(x.data))
    raw = np.where(x.data >= 0, 1 / (1 + decay), decay / (1 + decay))
    out = np.clip(raw, lower, upper).astype(x.dtype)

    def vjp(g):
        return (g * out * (1 - out),)

    return record("sigmoid", (x,), out, vjp)


def activation(x: Tensor, kind: str, alpha: float = DEFAULT_LEAKY_SLOPE) -> Tensor:
    """
    Apply an elementwise activation by name.

    Args:
        x: Input tensor
        kind: One of leaky_relu, relu, tanh, sigmoid
        alpha: Negative slope used by leaky_relu

    Returns:
        Activated tensor of the same shape
    """
    if kind == "leaky_relu":
        return leaky_relu(x, alpha)
    if kind == "relu":
        return relu(x)
    if kind == "tanh":
        return tanh(x)
    if kind == "sigmoid":
        return sigmoid(x)
    raise TensorError(f"Unknown activation {kind!r}; expected one of {ACTIVATIONS}")


# ---------------------------------------------------------------------------
# Dense and convolutional layers
# ---------------------------------------------------------------------------


def dense(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Affine map ``x @ weight + bias`` for x of shape (N, F) and weight (F, M)."""
    if x.ndim != 2:
        raise ShapeError(f"dense input must be (N, F), got shape {x.shape}")
    if weight.ndim != 2 or weight.shape[0] != x.shape[1]:
        raise ShapeError(
            f"dense inner dimension mismatch: input features {x.shape[1]} vs weight "
            f"rows {weight.shape[0] if weight.ndim else weight.shape}"
        )
    if bias.shape != (weight.shape[1],):
        raise ShapeError(f"dense bias must have shape ({weight.shape[1]},), got {bias.shape}")
    out = x.data @ weight.data + bias.data

    def vjp(g):
        return g @ weight.data.T, x.data.T @ g, g.sum(axis=0)

    return record("dense", (x, weight, bias), out, vjp)


def conv_output_size(size: int, kernel: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - kernel) // stride + 1


def conv_transpose_output_size(size: int, kernel: int, stride: int, padding: int) -> int:
    return (size - 1) * stride - 2 * padding + kernel


def _pad(array: np.ndarray, padding: int) -> np.ndarray:
    if padding == 0:
        return array
    return np.pad(array, ((0, 0), (0, 0), (padding, padding), (padding, padding)))


def _windows(padded: np.ndarray, kh: int, kw: int, stride: int, oh: int, ow: int) -> np.ndarray:
    """Strided view (N, C, oh, ow, kh, kw) of every receptive field."""
    view = sliding_window_view(padded, (kh, kw), axis=(2, 3))
    return view[:, :, : (oh - 1) * stride + 1 : stride, : (ow - 1) * stride + 1 : stride]


def _check_conv_args(
    op: str,
    x: Tensor,
    weight: Tensor,
    bias: Tensor,
    stride: int,
    padding: int,
    in_axis: int,
    out_axis: int,
):
    if x.ndim != 4:
        raise ShapeError(f"{op} input must be (N, C, H, W), got shape {x.shape}")
    if weight.ndim != 4:
        raise ShapeError(f"{op} weight must be rank 4, got shape {weight.shape}")
    kh, kw = weight.shape[2], weight.shape[3]
    if kh < 1 or kw < 1:
        raise ShapeError(f"{op} kernel height/width must be >= 1, got {kh}x{kw}")
    if stride < 1:
        raise ShapeError(f"{op} stride must be >= 1, got {stride}")
    if padding < 0:
        raise ShapeError(f"{op} padding must be >= 0, got {padding}")
    if weight.shape[in_axis] != x.shape[1]:
        raise ShapeError(
            f"{op} input channels mismatch: input has {x.shape[1]} channels, weight expects "
            f"{weight.shape[in_axis]}"
        )
    if bias.shape != (weight.shape[out_axis],):
        raise ShapeError(
            f"{op} bias must have shape ({weight.shape[out_axis]},), got {bias.shape}"
        )


def conv2d(x: Tensor, weight: Tensor, bias: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """
    2-D cross-correlation with zero padding.

    Args:
        x: Input (N, Cin, H, W)
        weight: Kernels (Cout, Cin, kH, kW)
        bias: Per-output-channel offsets (Cout,)
        stride: Step between receptive fields
        padding: Zero border added on every side

    Returns:
        Output (N, Cout, H', W') with H' = floor((H + 2p - kH) / stride) + 1
    """
    _check_conv_args("conv2d", x, weight, bias, stride, padding, in_axis=1, out_axis=0)
    n, _, h, w = x.shape
    kh, kw = weight.shape[2], weight.shape[3]
    if h + 2 * padding < kh:
        raise ShapeError(f"conv2d height {h} + 2*{padding} padding is smaller than kernel {kh}")
    if w + 2 * padding < kw:
        raise ShapeError(f"conv2d width {w} + 2*{padding} padding is smaller than kernel {kw}")
    oh = conv_output_size(h, kh, stride, padding)
    ow = conv_output_size(w, kw, stride, padding)

    padded = _pad(x.data, padding)
    windows = _windows(padded, kh, kw, stride, oh, ow)
    out = np.tensordot(windows, weight.data, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
    out = out + bias.data[None, :, None, None]

    def vjp(g):
        grad_weight = np.tensordot(g, windows, axes=([0, 2, 3], [0, 2, 3]))
        grad_bias = g.sum(axis=(0, 2, 3))
        grad_padded = np.zeros(padded.shape, dtype=g.dtype)
        for i in range(kh):
            for j in range(kw):
                contribution = np.tensordot(g, weight.data[:, :, i, j], axes=([1], [0]))
                grad_padded[
                    :, :, i : i + stride * oh : stride, j : j + stride * ow : stride
                ] += contribution.transpose(0, 3, 1, 2)
        grad_x = grad_padded[:, :, padding : padding + h, padding : padding + w]
        return grad_x, grad_weight, grad_bias

    return record("conv2d", (x, weight, bias), out, vjp)


def conv2d_transpose(
    x: Tensor, weight: Tensor, bias: Tensor, stride: int = 1, padding: int = 0
) -> Tensor:
    """
    Transposed convolution, the adjoint of :func:`conv2d` for matching stride/padding.

    Args:
        x: Input (N, Cin, H, W)
        weight: Kernels (Cin, Cout, kH, kW)
        bias: Per-output-channel offsets (Cout,)
        stride: Upsampling step
        padding: Border cropped from every side of the full output

    Returns:
        Output (N, Cout, H'', W'') with H'' = (H - 1) * stride - 2p + kH
    """
    _check_conv_args("conv2d_transpose", x, weight, bias, stride, padding, in_axis=0, out_axis=1)
    n, _, h, w = x.shape
    cout, kh, kw = weight.shape[1], weight.shape[2], weight.shape[3]
    oh = conv_transpose_output_size(h, kh, stride, padding)
    ow = conv_transpose_output_size(w, kw, stride, padding)
    if oh < 1 or ow < 1:
        raise ShapeError(
            f"conv2d_transpose output would be {oh}x{ow}; padding {padding} too large for "
            f"input {h}x{w} and kernel {kh}x{kw}"
        )
    full_h, full_w = (h - 1) * stride + kh, (w - 1) * stride + kw

    full = np.zeros((n, cout, full_h, full_w), dtype=_result_dtype(x, weight))
    for i in range(kh):
        for j in range(kw):
            contribution = np.tensordot(x.data, weight.data[:, :, i, j], axes=([1], [0]))
            full[:, :, i : i + stride * h : stride, j : j + stride * w : stride] += (
                contribution.transpose(0, 3, 1, 2)
            )
    out = full[:, :, padding : padding + oh, padding : padding + ow]
    out = out + bias.data[None, :, None, None]

    def vjp(g):
        windows = _windows(_pad(g, padding), kh, kw, stride, h, w)
        grad_x = np.tensordot(windows, weight.data, axes=([1, 4, 5], [1, 2, 3]))
        grad_weight = np.tensordot(x.data, windows, axes=([0, 2, 3], [0, 2, 3]))
        return grad_x.transpose(0, 3, 1, 2), grad_weight, g.sum(axis=(0, 2, 3))

    return record("conv2d_transpose", (x, weight, bias), out, vjp)


def maxpool2d(x: Tensor, window: int, stride: Optional[int] = None) -> Tensor:
    """
    Per-window maximum; the gradient routes to the first maximum in scan order.

    Args:
        x: Input (N, C, H, W)
        window: Square window extent
        stride: Step between windows (defaults to ``window``)
    """
    stride = window if stride is None else stride
    if x.ndim != 4:
        raise ShapeError(f"maxpool2d input must be (N, C, H, W), got shape {x.shape}")
    if window < 1 or stride < 1:
        raise ShapeError(f"maxpool2d window and stride must be >= 1, got {window}/{stride}")
    n, c, h, w = x.shape
    if window > h or window > w:
        raise ShapeError(f"maxpool2d window {window} larger than spatial extent {h}x{w}")
    oh = conv_output_size(h, window, stride, 0)
    ow = conv_output_size(w, window, stride, 0)

    windows = _windows(x.data, window, window, stride, oh, ow).reshape(n, c, oh, ow, -1)
    arg = windows.argmax(axis=-1)
    out = np.take_along_axis(windows, arg[..., None], axis=-1)[..., 0]

    def vjp(g):
        grad = np.zeros(x.shape, dtype=g.dtype)
        ni, ci, hi, wi = np.indices((n, c, oh, ow))
        rows = hi * stride + arg // window
        cols = wi * stride + arg % window
        np.add.at(grad, (ni, ci, rows, cols), g)
        return (grad,)

    return record("maxpool2d", (x,), out, vjp)


def _interpolation_matrix(size_in: int, size_out: int, dtype: np.dtype) -> np.ndarray:
    """Corner-aligned linear interpolation weights of shape (size_out, size_in)."""
    matrix = np.zeros((size_out, size_in), dtype=np.float64)
    if size_out == 1 or size_in == 1:
        source = np.zeros(size_out)
    else:
        source = np.arange(size_out, dtype=np.float64) * (size_in - 1) / (size_out - 1)
    lower = np.minimum(np.floor(source).astype(np.int64), size_in - 1)
    upper = np.minimum(lower + 1, size_in - 1)
    frac = source - lower
    rows = np.arange(size_out)
    np.add.at(matrix, (rows, lower), 1.0 - frac)
    np.add.at(matrix, (rows, upper), frac)
    return matrix.astype(dtype)


def bilinear_resize(x: Tensor, out_h: int, out_w: int) -> Tensor:
    """Corner-aligned bilinear resize of (N, C, H, W); identity when the size is unchanged."""
    if x.ndim != 4:
        raise ShapeError(f"bilinear_resize input must be (N, C, H, W), got shape {x.shape}")
    if out_h < 1 or out_w < 1:
        raise ShapeError(f"bilinear_resize output size must be >= 1, got {out_h}x{out_w}")
    _, _, h, w = x.shape
    rows = _interpolation_matrix(h, out_h, x.dtype)
    cols = _interpolation_matrix(w, out_w, x.dtype)
    out = np.einsum("oh,nchw,pw->ncop", rows, x.data, cols, optimize=True)

    def vjp(g):
        return (np.einsum("oh,ncop,pw->nchw", rows, g, cols, optimize=True),)

    return record("bilinear_resize", (x,), out, vjp)
