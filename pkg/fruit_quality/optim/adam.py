"""
Adam optimizer.

The update is functional: :func:`adam_step` returns a new parameter set and a new
state and never touches its inputs, so a training loop can checksum parameters
before and after a half-step.
"""

# Standard library imports
import logging
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Dict, Mapping, Tuple

# Third-party imports
import numpy as np

# Local imports
from ..exceptions import OptimizerError
from ..nn.init import ParameterSet
from ..tensor import Tape, Tensor, backward

logger = logging.getLogger(__name__)

GAN_DEFAULTS = {"lr": 2e-4, "beta1": 0.5, "beta2": 0.999, "eps": 1e-8}
CLASSIFIER_DEFAULTS = {"lr": 1e-4, "beta1": 0.9, "beta2": 0.999, "eps": 1e-8}

Gradients = Dict[str, np.ndarray]


@dataclass
class AdamState:
    """Moment estimates, step counter and hyperparameters of one Adam optimizer."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if self.lr <= 0:
            raise OptimizerError(f"Learning rate must be positive, got {self.lr}")
        for name in ("beta1", "beta2"):
            value = getattr(self, name)
            if not 0.0 <= value < 1.0:
                raise OptimizerError(f"{name} must lie in [0, 1), got {value}")
        if self.eps <= 0:
            raise OptimizerError(f"eps must be positive, got {self.eps}")

    @classmethod
    def for_gan(cls, **overrides) -> "AdamState":
        return cls(**{**GAN_DEFAULTS, **overrides})

    @classmethod
    def for_classifier(cls, **overrides) -> "AdamState":
        return cls(**{**CLASSIFIER_DEFAULTS, **overrides})


def adam_step(
    params: ParameterSet, grads: Mapping[str, np.ndarray], state: AdamState
) -> Tuple[ParameterSet, AdamState]:
    """
    Apply one bias-corrected Adam update.

    Args:
        params: Current parameters keyed by name
        grads: Gradient arrays keyed identically to ``params``
        state: Optimizer state; not modified

    Returns:
        (new parameters, new state) with ``t`` advanced by one

    Raises:
        OptimizerError: gradient keys differ from parameter keys, a shape differs,
            or a gradient contains NaN or infinity (the message names the parameter)
    """
    if set(grads) != set(params):
        missing = sorted(set(params) - set(grads))
        extra = sorted(set(grads) - set(params))
        raise OptimizerError(f"Gradient keys differ from parameters: missing={missing} extra={extra}")

    t = state.t + 1
    correction1 = 1.0 - state.beta1**t
    correction2 = 1.0 - state.beta2**t
    new_params: ParameterSet = OrderedDict()
    new_m: Dict[str, np.ndarray] = {}
    new_v: Dict[str, np.ndarray] = {}

    for name, param in params.items():
        g = np.asarray(grads[name])
        if g.shape != param.shape:
            raise OptimizerError(f"Gradient for {name} has shape {g.shape}, expected {param.shape}")
        if not np.all(np.isfinite(g)):
            raise OptimizerError(f"Non-finite gradient for parameter {name}")
        g = g.astype(param.dtype, copy=False)
        m = state.m.get(name)
        v = state.v.get(name)
        m = (1.0 - state.beta1) * g if m is None else state.beta1 * m + (1.0 - state.beta1) * g
        v = (1.0 - state.beta2) * g * g if v is None else state.beta2 * v + (1.0 - state.beta2) * g * g
        m = m.astype(param.dtype, copy=False)
        v = v.astype(param.dtype, copy=False)
        m_hat = m / correction1
        v_hat = v / correction2
        update = state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
        new_params[name] = Tensor(
            param.data - update.astype(param.dtype), requires_grad=True, name=name
        )
        new_m[name] = m
        new_v[name] = v

    new_state = AdamState(
        lr=state.lr, beta1=state.beta1, beta2=state.beta2, eps=state.eps, t=t, m=new_m, v=new_v
    )
    return new_params, new_state


def named_gradients(tape: Tape, loss: Tensor, params: ParameterSet) -> Gradients:
    """Reverse pass of ``loss`` keyed by parameter name."""
    by_tensor = backward(tape, loss, wrt=list(params.values()))
    return OrderedDict((name, by_tensor[tensor]) for name, tensor in params.items())
