"""
Finite-difference gradient verification.

Compares the tape's analytic gradients with central differences. Intended for
double-precision inputs; single precision is too coarse for the default tolerances.
"""

# Standard library imports
import logging
from dataclasses import dataclass, field
from typing import Callable, List, Sequence

# Third-party imports
import numpy as np

# Local imports
from .tape import Tape, backward
from .tensor import Tensor

logger = logging.getLogger(__name__)

DEFAULT_EPSILON = 1e-4
DEFAULT_TOLERANCE = 1e-5
DEFAULT_ABS_FLOOR = 1e-8
DIRECTIONAL_EPSILON = 1e-6

ScalarFn = Callable[[Sequence[Tensor]], Tensor]


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = DEFAULT_ABS_FLOOR):
    """Elementwise |a - n| / max(|a|, |n|, floor)."""
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / scale


def numerical_gradient(
    fn: ScalarFn, inputs: Sequence[Tensor], index: int, epsilon: float = DEFAULT_EPSILON
) -> np.ndarray:
    """Central-difference gradient of ``fn`` with respect to ``inputs[index]``."""
    base = inputs[index].numpy()
    grad = np.zeros_like(base)
    flat = base.reshape(-1)
    grad_flat = grad.reshape(-1)
    for k in range(flat.size):
        original = flat[k]
        flat[k] = original + epsilon
        plus = fn(_replace(inputs, index, base)).item()
        flat[k] = original - epsilon
        minus = fn(_replace(inputs, index, base)).item()
        flat[k] = original
        grad_flat[k] = (plus - minus) / (2 * epsilon)
    return grad


def _replace(inputs: Sequence[Tensor], index: int, values: np.ndarray) -> List[Tensor]:
    replaced = list(inputs)
    replaced[index] = Tensor(values, dtype=inputs[index].dtype)
    return replaced


def analytic_gradients(fn: ScalarFn, inputs: Sequence[Tensor]) -> List[np.ndarray]:
    tracked = [Tensor(t.data, dtype=t.dtype, requires_grad=True) for t in inputs]
    with Tape() as tape:
        loss = fn(tracked)
    grads = backward(tape, loss, wrt=tracked)
    return [grads[t] for t in tracked]


@dataclass
class GradCheckResult:
    """Outcome of one finite-difference comparison."""

    max_relative_error: float
    per_input: List[float] = field(default_factory=list)
    tolerance: float = DEFAULT_TOLERANCE

    @property
    def passed(self) -> bool:
        return self.max_relative_error <= self.tolerance


def check_gradients(
    fn: ScalarFn,
    inputs: Sequence[Tensor],
    epsilon: float = DEFAULT_EPSILON,
    tolerance: float = DEFAULT_TOLERANCE,
    floor: float = DEFAULT_ABS_FLOOR,
) -> GradCheckResult:
    """
    Compare analytic and central-difference gradients of a scalar function.

    Args:
        fn: Maps the list of input tensors to a scalar tensor
        inputs: Point at which gradients are compared
        epsilon: Finite-difference step
        tolerance: Maximum accepted relative error
        floor: Absolute floor of the relative-error denominator

    Returns:
        GradCheckResult with the worst relative error overall and per input
    """
    analytic = analytic_gradients(fn, inputs)
    per_input = []
    for index, grad in enumerate(analytic):
        numeric = numerical_gradient(fn, inputs, index, epsilon)
        error = relative_error(grad, numeric, floor)
        per_input.append(float(error.max()) if error.size else 0.0)
    worst = max(per_input) if per_input else 0.0
    if worst > tolerance:
        logger.debug(f"Gradient check failed: max relative error {worst:.3e} > {tolerance:.1e}")
    return GradCheckResult(max_relative_error=worst, per_input=per_input, tolerance=tolerance)


def check_directional_gradients(
    fn: ScalarFn,
    inputs: Sequence[Tensor],
    rng: np.random.Generator,
    epsilon: float = DIRECTIONAL_EPSILON,
    tolerance: float = DEFAULT_TOLERANCE,
    floor: float = DEFAULT_ABS_FLOOR,
) -> GradCheckResult:
    """
    Compare analytic and central-difference derivatives along random unit directions.

    One direction is drawn inside each input and one spans all inputs together, so
    every input is covered at two evaluations per direction. Suited to whole networks
    where an elementwise check would need millions of evaluations.

    Returns:
        GradCheckResult with one relative error per direction, the spanning one last
    """
    analytic = analytic_gradients(fn, inputs)
    base = [t.numpy() for t in inputs]
    directions = []
    for index, values in enumerate(base):
        direction = [np.zeros_like(v) for v in base]
        direction[index] = rng.normal(size=values.shape)
        directions.append(direction)
    directions.append([rng.normal(size=v.shape) for v in base])

    per_direction = []
    for direction in directions:
        norm = np.sqrt(sum(float(np.sum(d * d)) for d in direction))
        direction = [d / norm for d in direction]
        plus = fn([Tensor(b + epsilon * d, dtype=t.dtype) for b, d, t in zip(base, direction, inputs)]).item()
        minus = fn([Tensor(b - epsilon * d, dtype=t.dtype) for b, d, t in zip(base, direction, inputs)]).item()
        numeric = (plus - minus) / (2 * epsilon)
        exact = sum(float(np.sum(g * d)) for g, d in zip(analytic, direction))
        per_direction.append(float(relative_error(np.array(exact), np.array(numeric), floor)))
    worst = max(per_direction) if per_direction else 0.0
    if worst > tolerance:
        logger.debug(f"Directional gradient check failed: max relative error {worst:.3e} > {tolerance:.1e}")
    return GradCheckResult(max_relative_error=worst, per_input=per_direction, tolerance=tolerance)
