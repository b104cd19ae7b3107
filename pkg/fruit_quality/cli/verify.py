"""
Built-in verification suites run by ``fruit-quality verify``.

- gradcheck: finite-difference checks of every differentiable op on inputs drawn
  from [-2, 2], and of the classifier, discriminator and generator graphs over
  every parameter, all in double precision
- conv-oracle: vectorised conv2d, conv2d_transpose and dense against nested-loop
  references, plus the conv/transpose adjoint identity
- schedule: the sparsity schedule against its closed form
"""

# Standard library imports
import itertools
import logging
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Sequence, Tuple

# Third-party imports
import numpy as np

# Local imports
from .. import tensor as T
from ..nn.networks import ClassifierNet, DiscriminatorNet, GeneratorNet, Network
from ..optim.losses import bce_loss, discriminator_loss
from ..prune.schedule import PruningSchedule, sparsity_at
from ..tensor import FLOAT32, FLOAT64, Tensor
from ..tensor.gradcheck import check_directional_gradients, check_gradients
from ..tensor.oracle import naive_conv2d, naive_conv2d_transpose, naive_dense

logger = logging.getLogger(__name__)

DEFAULT_TRIALS = 100
DOUBLE_TOLERANCE = 1e-12
SINGLE_TOLERANCE = 1e-6
ADJOINT_TOLERANCE = 1e-10
SCHEDULE_POINTS = 1000
GRADCHECK_RANGE = 2.0

Case = Tuple[Callable[[Sequence[Tensor]], Tensor], List[Tensor]]


@dataclass
class SuiteResult:
    name: str
    passed: int = 0
    failed: int = 0
    failures: List[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.failed == 0 and self.passed > 0

    def check(self, condition: bool, label: str):
        if condition:
            self.passed += 1
        else:
            self.failed += 1
            self.failures.append(label)
            logger.warning(f"{self.name}: {label} failed")


def _projected(rng: np.random.Generator, op: Callable[..., Tensor], *arrays: np.ndarray) -> Case:
    """Scalar case sum(op(inputs) * W) with a fixed random W."""
    inputs = [Tensor(a, dtype=FLOAT64) for a in arrays]
    weights = Tensor(rng.normal(size=op(*inputs).shape), dtype=FLOAT64)
    return (lambda ts: T.reduce_sum(T.mul(op(*ts), weights))), inputs


def _uniform(rng: np.random.Generator, *shape: int) -> np.ndarray:
    return rng.uniform(-GRADCHECK_RANGE, GRADCHECK_RANGE, size=shape)


def _away_from(values: np.ndarray, points: Sequence[float], margin: float = 0.05) -> np.ndarray:
    """Push entries at least ``margin`` away from kinks at ``points``."""
    for point in points:
        close = np.abs(values - point) < margin
        values = np.where(close, point + np.sign(values - point + 1e-12) * margin * 2, values)
    return values


def _op_cases() -> Dict[str, Callable[[np.random.Generator], Case]]:
    return {
        "add": lambda rng: _projected(rng, T.add, _uniform(rng, 3, 4), _uniform(rng, 4)),
        "sub": lambda rng: _projected(rng, T.sub, _uniform(rng, 3, 4), _uniform(rng, 3, 1)),
        "mul": lambda rng: _projected(rng, T.mul, _uniform(rng, 2, 3), _uniform(rng, 2, 3)),
        "scale": lambda rng: _projected(rng, lambda x: T.scale(x, 1.7), _uniform(rng, 5)),
        "mean": lambda rng: _projected(rng, T.mean, _uniform(rng, 3, 3)),
        "log": lambda rng: _projected(rng, T.log, rng.uniform(0.5, 2.0, size=(4, 2))),
        "clip": lambda rng: _projected(
            rng, lambda x: T.clip(x, -0.5, 0.5), _away_from(_uniform(rng, 6), (-0.5, 0.5))
        ),
        "tanh": lambda rng: _projected(rng, T.tanh, _uniform(rng, 2, 5)),
        "sigmoid": lambda rng: _projected(rng, T.sigmoid, _uniform(rng, 2, 5)),
        "relu": lambda rng: _projected(rng, T.relu, _away_from(_uniform(rng, 3, 4), (0.0,))),
        "leaky_relu": lambda rng: _projected(rng, T.leaky_relu, _away_from(_uniform(rng, 3, 4), (0.0,))),
        "dense": lambda rng: _projected(rng, T.dense, _uniform(rng, 4, 5), _uniform(rng, 5, 3), _uniform(rng, 3)),
        "conv2d": _conv_case,
        "conv2d_transpose": lambda rng: _projected(
            rng,
            lambda x, w, b: T.conv2d_transpose(x, w, b, 2, 1),
            _uniform(rng, 1, 3, 3, 3),
            _uniform(rng, 3, 2, 4, 4),
            _uniform(rng, 2),
        ),
        "maxpool2d": lambda rng: _projected(
            rng, lambda x: T.maxpool2d(x, 2), rng.permutation(32).reshape(1, 2, 4, 4) * 0.05
        ),
        "bilinear_resize": lambda rng: _projected(
            rng, lambda x: T.bilinear_resize(x, 5, 6), _uniform(rng, 1, 2, 3, 4)
        ),
        "embedding": lambda rng: _projected(rng, lambda t: T.embedding(t, [0, 2, 2]), _uniform(rng, 3, 4)),
        "concat": lambda rng: _projected(
            rng, lambda a, b: T.concat([a, b], axis=1), _uniform(rng, 2, 3), _uniform(rng, 2, 2)
        ),
        "flatten": lambda rng: _projected(rng, T.flatten, _uniform(rng, 2, 2, 3)),
    }


def _conv_case(rng: np.random.Generator) -> Case:
    stride = int(rng.integers(1, 3))
    return _projected(
        rng,
        lambda x, w, b: T.conv2d(x, w, b, stride, 1),
        _uniform(rng, 2, 2, 6, 6),
        _uniform(rng, 3, 2, 3, 3),
        _uniform(rng, 3),
    )


def _random_network(net: Network, rng: np.random.Generator) -> Network:
    """Double-precision copy of ``net`` with every tensor redrawn and nonzero biases."""
    params = OrderedDict()
    for spec in net.param_specs:
        if spec.kind == "bias":
            values = rng.uniform(-0.5, 0.5, size=spec.shape)
        elif spec.kind == "embedding":
            values = rng.normal(size=spec.shape)
        else:
            fan_in = spec.shape[0] if len(spec.shape) == 2 else int(np.prod(spec.shape[1:]))
            values = rng.normal(scale=1.0 / np.sqrt(fan_in), size=spec.shape)
        params[spec.name] = Tensor(values, dtype=FLOAT64)
    return net.with_params(params)


def _network_case(net: Network, loss: Callable[[Dict[str, Tensor]], Tensor]) -> Case:
    names = list(net.params)

    def fn(ts):
        return loss(OrderedDict(zip(names, ts)))

    return fn, list(net.params.values())


def _classifier_case(rng: np.random.Generator) -> Case:
    net = _random_network(ClassifierNet(16, 4, filters=(2, 2, 2), dtype=FLOAT64), rng)
    x = _uniform(rng, 3, 3, 16, 16)
    y = np.array([[0.0], [1.0], [1.0]])
    return _network_case(net, lambda params: bce_loss(net.forward(x, params), y))


def _discriminator_case(rng: np.random.Generator) -> Case:
    net = _random_network(DiscriminatorNet(16, dtype=FLOAT64), rng)
    real = _uniform(rng, 2, 3, 16, 16)
    fake = _uniform(rng, 2, 3, 16, 16)
    labels = [0, 1]
    return _network_case(
        net,
        lambda params: discriminator_loss(
            net.forward(real, labels, params), net.forward(fake, labels, params)
        ).total,
    )


def _generator_case(rng: np.random.Generator) -> Case:
    net = _random_network(GeneratorNet(16, latent_dim=8, embed_dim=4, dtype=FLOAT64), rng)
    z = _uniform(rng, 2, 8)
    target = Tensor(_uniform(rng, 2, 3, 16, 16), dtype=FLOAT64)

    def loss(params):
        diff = T.sub(net.forward(z, [0, 1], params), target)
        return T.mean(T.mul(diff, diff))

    return _network_case(net, loss)


def gradcheck_suite(trials: int = DEFAULT_TRIALS, seed: int = 0) -> SuiteResult:
    result = SuiteResult("gradcheck")
    cases = list(_op_cases().items())
    for trial in range(trials):
        name, build = cases[trial % len(cases)]
        rng = np.random.default_rng([seed, trial])
        fn, inputs = build(rng)
        check = check_gradients(fn, inputs)
        result.check(check.passed, f"{name} trial {trial} (max rel err {check.max_relative_error:.2e})")
    for name, build in (
        ("classifier", _classifier_case),
        ("discriminator", _discriminator_case),
        ("generator", _generator_case),
    ):
        rng = np.random.default_rng([seed, trials, len(name)])
        fn, inputs = build(rng)
        check = check_directional_gradients(fn, inputs, rng)
        result.check(check.passed, f"{name} graph, all parameters (max rel err {check.max_relative_error:.2e})")
    return result


def _max_scaled_error(actual: np.ndarray, expected: np.ndarray) -> float:
    return float(np.max(np.abs(actual - expected)) / max(1.0, float(np.max(np.abs(expected)))))


def conv_oracle_suite(seed: int = 0) -> SuiteResult:
    result = SuiteResult("conv-oracle")
    grid = itertools.product((1, 4), (1, 8), (2,), ((5, 5), (6, 7), (16, 16)), (1, 3), (1, 2), (0, 1))
    for index, (n, cin, cout, (h, w), k, stride, padding) in enumerate(grid):
        rng = np.random.default_rng([seed, index])
        x = rng.normal(size=(n, cin, h, w))
        weight = rng.normal(size=(cout, cin, k, k))
        bias = rng.normal(size=(cout,))
        label = f"n={n} cin={cin} {h}x{w} k={k} s={stride} p={padding}"

        expected = naive_conv2d(x, weight, bias, stride, padding)
        for dtype, tolerance in ((FLOAT64, DOUBLE_TOLERANCE), (FLOAT32, SINGLE_TOLERANCE)):
            out = T.conv2d(Tensor(x, dtype=dtype), Tensor(weight, dtype=dtype), Tensor(bias, dtype=dtype), stride, padding)
            result.check(_max_scaled_error(out.data, expected) <= tolerance, f"conv2d {dtype} {label}")

        t_weight = rng.normal(size=(cin, cout, k, k))
        expected_t = naive_conv2d_transpose(x, t_weight, bias, stride, padding)
        out_t = T.conv2d_transpose(Tensor(x, dtype=FLOAT64), Tensor(t_weight, dtype=FLOAT64), Tensor(bias, dtype=FLOAT64), stride, padding)
        result.check(_max_scaled_error(out_t.data, expected_t) <= DOUBLE_TOLERANCE, f"conv2d_transpose {label}")

        if (h + 2 * padding - k) % stride == 0 and (w + 2 * padding - k) % stride == 0:
            zeros = np.zeros(cin)
            forward = T.conv2d(Tensor(x, dtype=FLOAT64), Tensor(weight, dtype=FLOAT64), Tensor(np.zeros(cout), dtype=FLOAT64), stride, padding).data
            y = rng.normal(size=forward.shape)
            adjoint = T.conv2d_transpose(Tensor(y, dtype=FLOAT64), Tensor(weight, dtype=FLOAT64), Tensor(zeros, dtype=FLOAT64), stride, padding).data
            lhs, rhs = float(np.sum(forward * y)), float(np.sum(x * adjoint))
            result.check(abs(lhs - rhs) <= ADJOINT_TOLERANCE * max(1.0, abs(lhs)), f"adjoint {label}")

    for index, (n, features, units) in enumerate(itertools.product((1, 4), (3, 8), (1, 5))):
        rng = np.random.default_rng([seed, 1000 + index])
        x, weight, bias = rng.normal(size=(n, features)), rng.normal(size=(features, units)), rng.normal(size=(units,))
        out = T.dense(Tensor(x, dtype=FLOAT64), Tensor(weight, dtype=FLOAT64), Tensor(bias, dtype=FLOAT64))
        result.check(
            _max_scaled_error(out.data, naive_dense(x, weight, bias)) <= DOUBLE_TOLERANCE,
            f"dense n={n} f={features} m={units}",
        )
    return result


def schedule_suite(points: int = SCHEDULE_POINTS, seed: int = 0) -> SuiteResult:
    result = SuiteResult("schedule")
    derived = PruningSchedule(final_sparsity=0.5, initial_sparsity=0.0, epochs=20, power=3.0)
    result.check(abs(sparsity_at(10, derived) - 0.4375) <= DOUBLE_TOLERANCE, "s(10) = 0.4375")
    result.check(sparsity_at(0, derived) == 0.0, "s(0) = s_i")
    result.check(sparsity_at(20, derived) == 0.5, "s(T) = s_f")
    result.check(sparsity_at(20, PruningSchedule(final_sparsity=0.9)) == 0.9, "s(T) = 0.9 exactly")

    rng = np.random.default_rng(seed)
    for index in range(points):
        s_f = float(rng.uniform(0.0, 0.99))
        s_i = float(rng.uniform(0.0, s_f))
        epochs = int(rng.integers(1, 51))
        power = float(rng.uniform(0.5, 4.0))
        t = float(rng.uniform(0.0, epochs))
        sched = PruningSchedule(final_sparsity=s_f, initial_sparsity=s_i, epochs=epochs, power=power)
        expected = s_f + (s_i - s_f) * (1.0 - t / epochs) ** power
        result.check(abs(sparsity_at(t, sched) - expected) <= DOUBLE_TOLERANCE, f"grid point {index}")

    values = [sparsity_at(t, derived) for t in range(derived.epochs + 1)]
    result.check(all(a <= b for a, b in zip(values, values[1:])), "monotone non-decreasing")
    return result


SUITES = {
    "gradcheck": lambda trials, seed: gradcheck_suite(trials, seed),
    "conv-oracle": lambda trials, seed: conv_oracle_suite(seed),
    "schedule": lambda trials, seed: schedule_suite(seed=seed),
}


def run_suites(names: Sequence[str] = tuple(SUITES), trials: int = DEFAULT_TRIALS, seed: int = 0) -> List[SuiteResult]:
    results = []
    for name in names:
        result = SUITES[name](trials, seed)
        logger.info(f"{name}: {result.passed} passed, {result.failed} failed")
        results.append(result)
    return results
