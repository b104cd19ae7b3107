"""
Operation tape and reverse-mode gradient computation.

Operators record themselves on the tape that is active in the current thread
(``with Tape() as tape:``). Nothing is recorded when no tape is active, which
is how inference and frozen sub-networks run.
"""

# Standard library imports
import logging
import threading
from dataclasses import dataclass
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

# Third-party imports
import numpy as np

# Local imports
from ..exceptions import GradientError
from .tensor import Tensor

logger = logging.getLogger(__name__)

_local = threading.local()

VJP = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


@dataclass
class TapeNode:
    """One executed operator: its inputs, output and vector-Jacobian product."""

    op: str
    inputs: Tuple[Tensor, ...]
    output: Tensor
    vjp: VJP


class Tape:
    """Ordered record of executed operators for one logical thread."""

    def __init__(self):
        self.nodes: List[TapeNode] = []

    def __enter__(self) -> "Tape":
        stack = _tape_stack()
        stack.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        stack = _tape_stack()
        if stack and stack[-1] is self:
            stack.pop()
        return False

    def __len__(self) -> int:
        return len(self.nodes)

    def record(self, op: str, inputs: Tuple[Tensor, ...], output: Tensor, vjp: VJP):
        self.nodes.append(TapeNode(op, inputs, output, vjp))


def _tape_stack() -> List[Tape]:
    if not hasattr(_local, "stack"):
        _local.stack = []
    return _local.stack


def active_tape() -> Optional[Tape]:
    """Innermost tape of the calling thread, if any."""
    stack = _tape_stack()
    return stack[-1] if stack else None


def record(op: str, inputs: Sequence[Tensor], output_data: np.ndarray, vjp: VJP) -> Tensor:
    """
    Wrap an operator result and record it when a tape is active and any input is tracked.

    Args:
        op: Operator name
        inputs: Tensors the operator consumed
        output_data: Freshly computed result array
        vjp: Maps the output cotangent to one cotangent (or None) per input

    Returns:
        The output Tensor
    """
    tape = active_tape()
    tracked = tape is not None and any(t.requires_grad for t in inputs)
    output = Tensor._wrap(output_data, requires_grad=tracked)
    if tracked:
        tape.record(op, tuple(inputs), output, vjp)
    return output


def backward(
    tape: Tape, loss: Tensor, wrt: Optional[Iterable[Tensor]] = None
) -> Dict[Tensor, np.ndarray]:
    """
    Run the reverse pass over ``tape`` starting from a scalar ``loss``.

    Args:
        tape: Tape the loss was computed under
        loss: Scalar tensor produced by a recorded operator
        wrt: Tensors to report gradients for; defaults to every tracked leaf
            that an operator on the tape consumed

    Returns:
        Mapping tensor -> gradient array of the tensor's shape (zeros when the
        loss does not depend on it)
    """
    if loss.size != 1:
        raise GradientError(f"Loss must be a scalar, got shape {loss.shape}")

    produced = {id(node.output) for node in tape.nodes}
    if id(loss) not in produced:
        raise GradientError("Loss was not produced through this tape")

    grads: Dict[int, np.ndarray] = {id(loss): np.ones(loss.shape, dtype=loss.dtype)}

    for node in reversed(tape.nodes):
        upstream = grads.get(id(node.output))
        if upstream is None:
            continue
        contributions = node.vjp(upstream)
        for tensor, contribution in zip(node.inputs, contributions):
            if contribution is None or not tensor.requires_grad:
                continue
            contribution = np.asarray(contribution, dtype=tensor.dtype).reshape(tensor.shape)
            key = id(tensor)
            if key in grads:
                grads[key] = grads[key] + contribution
            else:
                grads[key] = contribution

    if wrt is None:
        leaves: Dict[int, Tensor] = {}
        for node in tape.nodes:
            for tensor in node.inputs:
                if tensor.requires_grad and id(tensor) not in produced:
                    leaves.setdefault(id(tensor), tensor)
        targets = list(leaves.values())
    else:
        targets = list(wrt)

    result: Dict[Tensor, np.ndarray] = {}
    for tensor in targets:
        grad = grads.get(id(tensor))
        if grad is None:
            grad = np.zeros(tensor.shape, dtype=tensor.dtype)
        result[tensor] = grad

    logger.debug(f"Reverse pass over {len(tape.nodes)} ops produced {len(result)} gradients")
    return result
