"""
Generator, discriminator and classifier networks.

A network is a fixed topology plus an ordered parameter set. Forward passes are
plain functions of (inputs, params): pass ``params`` explicitly to evaluate a
candidate set (optimizer updates, gradient checks) or omit it to use the
network's own. Networks never mutate their parameters in place; training code
swaps in a new set with :meth:`Network.with_params`.
"""

# Standard library imports
import copy
import logging
import math
import os
from collections import OrderedDict
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

# Third-party imports
import numpy as np

# Local imports
from .. import tensor as T
from ..exceptions import CheckpointError, ShapeError, TensorError
from ..tensor import FLOAT32, Tensor
from .init import ParameterSet, ParamSpec, clone_params, init_params, is_prunable

logger = logging.getLogger(__name__)

SEED_SIZE = 8
DEFAULT_LATENT_DIM = 100
DEFAULT_EMBED_DIM = 50
DISCRIMINATOR_FILTERS = 128
BACKBONE_FILTERS = (32, 64, 128)
SUPPORTED_GENERATOR_RESOLUTIONS = (16, 32, 64, 128, 256)

ArrayLike = Union[np.ndarray, Tensor, Sequence[float]]


def _as_input(value: ArrayLike, dtype: np.dtype) -> Tensor:
    if isinstance(value, Tensor):
        return value if value.dtype == dtype else value.astype(dtype)
    return Tensor(value, dtype=dtype)


def _labels(labels: Sequence[int], num_classes: int, batch: int) -> np.ndarray:
    idx = np.asarray(labels, dtype=np.int64).reshape(-1)
    if idx.size != batch:
        raise ShapeError(f"Expected {batch} labels, got {idx.size}")
    if idx.size and (idx.min() < 0 or idx.max() >= num_classes):
        raise ShapeError(f"Labels must lie in [0, {num_classes}), got {sorted(set(idx.tolist()))}")
    return idx


class Network:
    """Shared plumbing: parameter declarations, the live parameter set, copies."""

    def __init__(self, specs: List[ParamSpec], seed: int = 0, dtype: Any = FLOAT32):
        self.param_specs = specs
        self.seed = seed
        self.params: ParameterSet = init_params(specs, seed, dtype)

    @property
    def dtype(self) -> np.dtype:
        first = next(iter(self.params.values()))
        return first.dtype

    def with_params(self, params: ParameterSet) -> "Network":
        """Shallow copy of this network carrying ``params``."""
        self._check_params(params)
        clone = copy.copy(self)
        clone.params = OrderedDict(params)
        return clone

    def copy(self) -> "Network":
        """Independent copy with fresh parameter tensors."""
        return self.with_params(clone_params(self.params))

    def astype(self, dtype: Any) -> "Network":
        return self.with_params(clone_params(self.params, dtype))

    def prunable_names(self) -> List[str]:
        return [name for name in self.params if is_prunable(name)]

    def _check_params(self, params: ParameterSet):
        for spec in self.param_specs:
            if spec.name not in params:
                raise CheckpointError(f"Parameter {spec.name} missing")
            if tuple(params[spec.name].shape) != tuple(spec.shape):
                raise CheckpointError(
                    f"Parameter {spec.name} has shape {params[spec.name].shape}, "
                    f"expected {spec.shape}"
                )

    def _resolve(self, params: Optional[ParameterSet]) -> ParameterSet:
        return self.params if params is None else params


class GeneratorNet(Network):
    """
    Label-conditioned generator.

    The latent vector is concatenated with a learned label embedding, projected to a
    three-channel 8x8 seed image and upsampled by stride-2 transpose convolutions
    until the target resolution, then mapped to RGB with a tanh output convolution.
    """

    def __init__(
        self,
        resolution: int,
        latent_dim: int = DEFAULT_LATENT_DIM,
        embed_dim: int = DEFAULT_EMBED_DIM,
        num_classes: int = 2,
        seed_channels: int = 3,
        alpha: float = T.ops.DEFAULT_LEAKY_SLOPE,
        seed: int = 0,
        dtype: Any = FLOAT32,
    ):
        if resolution not in SUPPORTED_GENERATOR_RESOLUTIONS:
            raise ShapeError(
                f"Generator resolution must be one of {SUPPORTED_GENERATOR_RESOLUTIONS}, "
                f"got {resolution}"
            )
        self.resolution = resolution
        self.latent_dim = latent_dim
        self.embed_dim = embed_dim
        self.num_classes = num_classes
        self.seed_channels = seed_channels
        self.alpha = alpha
        self.num_blocks = int(math.log2(resolution // SEED_SIZE))
        self.block_filters = [128] * (self.num_blocks - 1) + [64]

        specs = [
            ParamSpec("label_embedding.table", (num_classes, embed_dim), "embedding"),
            ParamSpec(
                "projection.weight",
                (latent_dim + embed_dim, SEED_SIZE * SEED_SIZE * seed_channels),
                "weight",
            ),
            ParamSpec("projection.bias", (SEED_SIZE * SEED_SIZE * seed_channels,), "bias"),
        ]
        channels = seed_channels
        for index, filters in enumerate(self.block_filters, start=1):
            specs.append(ParamSpec(f"up{index}.weight", (channels, filters, 4, 4), "weight"))
            specs.append(ParamSpec(f"up{index}.bias", (filters,), "bias"))
            channels = filters
        specs.append(ParamSpec("output.weight", (3, channels, 3, 3), "weight"))
        specs.append(ParamSpec("output.bias", (3,), "bias"))
        super().__init__(specs, seed, dtype)

    def forward(
        self, z: ArrayLike, labels: Sequence[int], params: Optional[ParameterSet] = None
    ) -> Tensor:
        """
        Generate images for latent vectors ``z`` (N, latent_dim) and class ``labels``.

        Returns:
            Tensor (N, 3, R, R) with values strictly inside (-1, 1)
        """
        p = self._resolve(params)
        z = _as_input(z, self.dtype)
        if z.ndim != 2 or z.shape[1] != self.latent_dim:
            raise ShapeError(f"Latent batch must be (N, {self.latent_dim}), got {z.shape}")
        n = z.shape[0]
        idx = _labels(labels, self.num_classes, n)

        embedded = T.embedding(p["label_embedding.table"], idx)
        h = T.dense(T.concat([z, embedded], axis=1), p["projection.weight"], p["projection.bias"])
        h = T.leaky_relu(h, self.alpha)
        h = T.reshape(h, (n, self.seed_channels, SEED_SIZE, SEED_SIZE))
        for index in range(1, self.num_blocks + 1):
            h = T.conv2d_transpose(h, p[f"up{index}.weight"], p[f"up{index}.bias"], 2, 1)
            h = T.leaky_relu(h, self.alpha)
        h = T.conv2d(h, p["output.weight"], p["output.bias"], 1, 1)
        return T.tanh(h)

    @classmethod
    def from_params(cls, params: ParameterSet) -> "GeneratorNet":
        """Rebuild a generator whose hyperparameters are implied by parameter shapes."""
        try:
            num_classes, embed_dim = params["label_embedding.table"].shape
            rows, seed_values = params["projection.weight"].shape
        except KeyError as exc:
            raise CheckpointError(f"Not a generator checkpoint: missing {exc}") from exc
        blocks = sum(1 for name in params if name.startswith("up") and name.endswith(".weight"))
        net = cls(
            resolution=SEED_SIZE * 2**blocks,
            latent_dim=rows - embed_dim,
            embed_dim=embed_dim,
            num_classes=num_classes,
            seed_channels=seed_values // (SEED_SIZE * SEED_SIZE),
            dtype=params["projection.weight"].dtype,
        )
        return net.with_params(params)


class DiscriminatorNet(Network):
    """
    Label-conditioned discriminator.

    The label embedding is projected to one extra full-resolution input channel,
    followed by exactly two stride-2 3x3 convolutions of 128 filters with LeakyReLU
    and a dense layer producing one logit.
    """

    def __init__(
        self,
        resolution: int,
        num_classes: int = 2,
        embed_dim: int = DEFAULT_EMBED_DIM,
        alpha: float = T.ops.DEFAULT_LEAKY_SLOPE,
        seed: int = 0,
        dtype: Any = FLOAT32,
    ):
        if resolution < 16:
            raise ShapeError(f"Discriminator resolution must be >= 16, got {resolution}")
        if resolution % 4:
            raise ShapeError(f"Discriminator resolution must be divisible by 4, got {resolution}")
        self.resolution = resolution
        self.num_classes = num_classes
        self.embed_dim = embed_dim
        self.alpha = alpha
        reduced = resolution // 4
        specs = [
            ParamSpec("label_embedding.table", (num_classes, embed_dim), "embedding"),
            ParamSpec("label_projection.weight", (embed_dim, resolution * resolution), "weight"),
            ParamSpec("label_projection.bias", (resolution * resolution,), "bias"),
            ParamSpec("conv1.weight", (DISCRIMINATOR_FILTERS, 4, 3, 3), "weight"),
            ParamSpec("conv1.bias", (DISCRIMINATOR_FILTERS,), "bias"),
            ParamSpec(
                "conv2.weight", (DISCRIMINATOR_FILTERS, DISCRIMINATOR_FILTERS, 3, 3), "weight"
            ),
            ParamSpec("conv2.bias", (DISCRIMINATOR_FILTERS,), "bias"),
            ParamSpec("output.weight", (DISCRIMINATOR_FILTERS * reduced * reduced, 1), "weight"),
            ParamSpec("output.bias", (1,), "bias"),
        ]
        super().__init__(specs, seed, dtype)

    def feature_shape(self) -> Tuple[int, int, int]:
        """Shape of the feature maps after the two downsampling convolutions."""
        return (DISCRIMINATOR_FILTERS, self.resolution // 4, self.resolution // 4)

    def forward(
        self,
        x: ArrayLike,
        labels: Sequence[int],
        params: Optional[ParameterSet] = None,
        capture: Optional[Dict[str, Tensor]] = None,
    ) -> Tensor:
        """Logits (N, 1) for images ``x`` (N, 3, R, R) conditioned on ``labels``."""
        p = self._resolve(params)
        x = _as_input(x, self.dtype)
        r = self.resolution
        if x.ndim != 4 or x.shape[1:] != (3, r, r):
            raise ShapeError(f"Discriminator input must be (N, 3, {r}, {r}), got {x.shape}")
        n = x.shape[0]
        idx = _labels(labels, self.num_classes, n)

        label_plane = T.dense(
            T.embedding(p["label_embedding.table"], idx),
            p["label_projection.weight"],
            p["label_projection.bias"],
        )
        h = T.concat([x, T.reshape(label_plane, (n, 1, r, r))], axis=1)
        h = T.leaky_relu(T.conv2d(h, p["conv1.weight"], p["conv1.bias"], 2, 1), self.alpha)
        h = T.leaky_relu(T.conv2d(h, p["conv2.weight"], p["conv2.bias"], 2, 1), self.alpha)
        if capture is not None:
            capture["features"] = h
        return T.dense(T.flatten(h), p["output.weight"], p["output.bias"])

    @classmethod
    def from_params(cls, params: ParameterSet) -> "DiscriminatorNet":
        try:
            num_classes, embed_dim = params["label_embedding.table"].shape
            pixels = params["label_projection.bias"].shape[0]
        except KeyError as exc:
            raise CheckpointError(f"Not a discriminator checkpoint: missing {exc}") from exc
        net = cls(
            resolution=int(round(math.sqrt(pixels))),
            num_classes=num_classes,
            embed_dim=embed_dim,
            dtype=params["conv1.weight"].dtype,
        )
        return net.with_params(params)


class ClassifierNet(Network):
    """
    VGG-style binary classifier.

    Three backbone blocks of two 3x3 ReLU convolutions and a 2x2 max pool
    (32/64/128 filters), one ReLU interpretation layer of configurable width and a
    single sigmoid output neuron.
    """

    def __init__(
        self,
        resolution: int,
        interpretation_width: int,
        filters: Sequence[int] = BACKBONE_FILTERS,
        seed: int = 0,
        dtype: Any = FLOAT32,
    ):
        if interpretation_width < 1:
            raise ShapeError(f"Interpretation width must be >= 1, got {interpretation_width}")
        divisor = 2 ** len(filters)
        if resolution < divisor or resolution % divisor:
            raise ShapeError(
                f"Classifier resolution must be a positive multiple of {divisor}, got {resolution}"
            )
        self.resolution = resolution
        self.interpretation_width = interpretation_width
        self.filters = tuple(filters)
        reduced = resolution // divisor

        specs: List[ParamSpec] = []
        channels = 3
        for block, out_channels in enumerate(self.filters, start=1):
            for conv in (1, 2):
                prefix = f"backbone.block{block}.conv{conv}"
                specs.append(ParamSpec(f"{prefix}.weight", (out_channels, channels, 3, 3), "weight"))
                specs.append(ParamSpec(f"{prefix}.bias", (out_channels,), "bias"))
                channels = out_channels
        flat = channels * reduced * reduced
        specs += [
            ParamSpec("interpretation.weight", (flat, interpretation_width), "weight"),
            ParamSpec("interpretation.bias", (interpretation_width,), "bias"),
            ParamSpec("output.weight", (interpretation_width, 1), "weight"),
            ParamSpec("output.bias", (1,), "bias"),
        ]
        super().__init__(specs, seed, dtype)

    @property
    def conv_layer_names(self) -> List[str]:
        return [
            f"backbone.block{block}.conv{conv}"
            for block in range(1, len(self.filters) + 1)
            for conv in (1, 2)
        ]

    def logits(
        self,
        x: ArrayLike,
        params: Optional[ParameterSet] = None,
        capture: Optional[Dict[str, Tensor]] = None,
    ) -> Tensor:
        """
        Pre-sigmoid scores (N, 1).

        Args:
            x: Images (N, 3, R, R) in [-1, 1]
            params: Parameter set to evaluate instead of the network's own
            capture: If given, filled with post-ReLU activations keyed by conv layer name
        """
        p = self._resolve(params)
        x = _as_input(x, self.dtype)
        r = self.resolution
        if x.ndim != 4 or x.shape[1:] != (3, r, r):
            raise ShapeError(f"Classifier input must be (N, 3, {r}, {r}), got {x.shape}")
        h = x
        for block in range(1, len(self.filters) + 1):
            for conv in (1, 2):
                name = f"backbone.block{block}.conv{conv}"
                h = T.relu(T.conv2d(h, p[f"{name}.weight"], p[f"{name}.bias"], 1, 1))
                if capture is not None:
                    capture[name] = h
            h = T.maxpool2d(h, 2)
        h = T.relu(T.dense(T.flatten(h), p["interpretation.weight"], p["interpretation.bias"]))
        return T.dense(h, p["output.weight"], p["output.bias"])

    def forward(self, x: ArrayLike, params: Optional[ParameterSet] = None) -> Tensor:
        """Unhealthy-class probabilities (N, 1) strictly inside (0, 1)."""
        return T.sigmoid(self.logits(x, params))

    def predict_proba(self, images: np.ndarray, batch_size: int = 128) -> np.ndarray:
        """Probabilities (N,) for an image array, evaluated in batches without a tape."""
        outputs = []
        for start in range(0, len(images), batch_size):
            outputs.append(self.forward(images[start : start + batch_size]).data[:, 0])
        if not outputs:
            return np.zeros(0, dtype=self.dtype)
        return np.concatenate(outputs)

    def load_backbone(self, source: Union[ParameterSet, str, os.PathLike]) -> "ClassifierNet":
        """
        Return a copy whose backbone tensors come from external weights.

        Args:
            source: Checkpoint path or parameter set. Every ``backbone.*`` entry must
                match a backbone tensor of this network by name and shape; head
                tensors are kept.
        """
        if isinstance(source, dict):
            params = source
        else:
            from .checkpoint import load_checkpoint

            params = load_checkpoint(source)
        incoming = OrderedDict((k, v) for k, v in params.items() if k.startswith("backbone."))
        if not incoming:
            raise CheckpointError("External weights contain no backbone.* tensors")
        merged = OrderedDict(self.params)
        for name, value in incoming.items():
            if name not in merged:
                raise CheckpointError(f"Unknown backbone tensor {name}")
            if value.shape != merged[name].shape:
                raise CheckpointError(
                    f"Backbone tensor {name} has shape {value.shape}, expected {merged[name].shape}"
                )
            merged[name] = Tensor(value.data, dtype=self.dtype, requires_grad=True, name=name)
        logger.info(f"Loaded {len(incoming)} external backbone tensors")
        return self.with_params(merged)

    @classmethod
    def from_params(cls, params: ParameterSet) -> "ClassifierNet":
        """Rebuild a classifier whose resolution and width are implied by parameter shapes."""
        try:
            flat, width = params["interpretation.weight"].shape
        except KeyError as exc:
            raise CheckpointError(f"Not a classifier checkpoint: missing {exc}") from exc
        filters = []
        block = 1
        while f"backbone.block{block}.conv2.weight" in params:
            filters.append(params[f"backbone.block{block}.conv2.weight"].shape[0])
            block += 1
        if not filters:
            raise CheckpointError("Not a classifier checkpoint: no backbone blocks")
        reduced = int(round(math.sqrt(flat // filters[-1])))
        net = cls(
            resolution=reduced * 2 ** len(filters),
            interpretation_width=width,
            filters=filters,
            dtype=params["interpretation.weight"].dtype,
        )
        return net.with_params(params)


def build_generator(
    latent_dim: int = DEFAULT_LATENT_DIM,
    embed_dim: int = DEFAULT_EMBED_DIM,
    resolution: int = 32,
    num_classes: int = 2,
    seed: int = 0,
    dtype: Any = FLOAT32,
) -> GeneratorNet:
    return GeneratorNet(
        resolution,
        latent_dim=latent_dim,
        embed_dim=embed_dim,
        num_classes=num_classes,
        seed=seed,
        dtype=dtype,
    )


def build_discriminator(
    resolution: int,
    num_classes: int = 2,
    embed_dim: int = DEFAULT_EMBED_DIM,
    seed: int = 0,
    dtype: Any = FLOAT32,
) -> DiscriminatorNet:
    return DiscriminatorNet(
        resolution, num_classes=num_classes, embed_dim=embed_dim, seed=seed, dtype=dtype
    )


def build_classifier(
    resolution: int, interpretation_width: int, seed: int = 0, dtype: Any = FLOAT32
) -> ClassifierNet:
    return ClassifierNet(resolution, interpretation_width, seed=seed, dtype=dtype)


def count_params(net: Union[Network, ParameterSet]) -> Tuple[int, int]:
    """
    Count parameters of a network or parameter set.

    Returns:
        (total, prunable) where prunable covers conv and dense weights only
    """
    params = net.params if isinstance(net, Network) else net
    if not isinstance(params, dict):
        raise TensorError(f"Cannot count parameters of {type(net).__name__}")
    total = sum(t.size for t in params.values())
    prunable = sum(t.size for name, t in params.items() if is_prunable(name))
    return int(total), int(prunable)
