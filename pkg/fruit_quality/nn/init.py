"""
Parameter declarations and seeded initialisation.
"""

# Standard library imports
import logging
from collections import OrderedDict
from dataclasses import dataclass
from typing import Any, Dict, Iterable, Tuple

# Third-party imports
import numpy as np

# Local imports
from ..exceptions import TensorError
from ..tensor import FLOAT32, Tensor

logger = logging.getLogger(__name__)

INIT_STDDEV = 0.02
PARAM_KINDS = ("weight", "bias", "embedding")
_SEED_MASK = (1 << 64) - 1

ParameterSet = Dict[str, Tensor]


@dataclass(frozen=True)
class ParamSpec:
    """Name, shape and role of one network parameter."""

    name: str
    shape: Tuple[int, ...]
    kind: str

    def __post_init__(self):
        if self.kind not in PARAM_KINDS:
            raise TensorError(f"Unknown parameter kind {self.kind!r} for {self.name}")


def init_params(net_spec: Iterable[ParamSpec], seed: int, dtype: Any = FLOAT32) -> ParameterSet:
    """
    Draw a fresh parameter set for a list of parameter declarations.

    Weights and embeddings follow Normal(0, 0.02); biases start at zero. Values are
    drawn in declaration order from one generator, so the result depends only on
    ``seed`` and the declarations.

    Args:
        net_spec: Parameter declarations in network order
        seed: Any integer; reduced to 64 bits
        dtype: float32 for training, float64 for gradient verification

    Returns:
        Ordered mapping name -> tracked Tensor
    """
    rng = np.random.default_rng(int(seed) & _SEED_MASK)
    params: ParameterSet = OrderedDict()
    for spec in net_spec:
        if spec.kind == "bias":
            values = np.zeros(spec.shape)
        else:
            values = rng.normal(0.0, INIT_STDDEV, size=spec.shape)
        params[spec.name] = Tensor(values, dtype=dtype, requires_grad=True, name=spec.name)
    logger.debug(f"Initialised {len(params)} parameter tensors from seed {seed}")
    return params


def is_prunable(name: str) -> bool:
    """Conv and dense weights are prunable; biases and embedding tables are not."""
    return name.endswith(".weight")


def clone_params(params: ParameterSet, dtype: Any = None) -> ParameterSet:
    """Fresh tracked tensors with the same values (optionally cast)."""
    return OrderedDict(
        (name, Tensor(t.data, dtype=dtype or t.dtype, requires_grad=True, name=name))
        for name, t in params.items()
    )


def params_equal(left: ParameterSet, right: ParameterSet) -> bool:
    """Bit-exact comparison of two parameter sets, including order and dtype."""
    if list(left) != list(right):
        return False
    return all(
        left[name].dtype == right[name].dtype
        and left[name].shape == right[name].shape
        and left[name].data.tobytes() == right[name].data.tobytes()
        for name in left
    )
