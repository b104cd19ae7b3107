"""
Network definitions, parameter initialisation and checkpoint files.
"""

from .checkpoint import (
    decode_checkpoint,
    load_checkpoint,
    save_checkpoint,
    save_sparse_checkpoint,
)
from .init import ParameterSet, ParamSpec, clone_params, init_params, is_prunable, params_equal
from .networks import (
    ClassifierNet,
    DiscriminatorNet,
    GeneratorNet,
    Network,
    build_classifier,
    build_discriminator,
    build_generator,
    count_params,
)

__all__ = [
    "ClassifierNet",
    "DiscriminatorNet",
    "GeneratorNet",
    "Network",
    "ParamSpec",
    "ParameterSet",
    "build_classifier",
    "build_discriminator",
    "build_generator",
    "clone_params",
    "count_params",
    "decode_checkpoint",
    "init_params",
    "is_prunable",
    "load_checkpoint",
    "params_equal",
    "save_checkpoint",
    "save_sparse_checkpoint",
]
