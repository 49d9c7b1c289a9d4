"""
Parameter containers.

A :class:`Module` owns :class:`~fatformer.tensor.Parameter` attributes and child modules, and
exposes them by dotted name. Parameters reachable through several attributes (the backbone
shared between branches) are reported once, under the first name that reaches them.
"""
from collections import OrderedDict
import zlib
from typing import (  # noqa pylint: disable=unused-import
    Any,
    Dict,
    Iterator,
    List,
    Optional,
    Tuple,
)

import numpy as np

from . import ops
from .errors import ContractError, DimensionError
from .tensor import TRANSFORMER, Parameter, Tensor


class Module(object):
    """Base class for everything that owns parameters."""

    training = True

    def named_parameters(self):
        # type: () -> List[Tuple[str, Parameter]]
        """Return (dotted name, parameter) pairs in attribute order, each parameter once."""
        found = []  # type: List[Tuple[str, Parameter]]
        seen = set()
        for name, parameter in self._walk_parameters(''):
            if id(parameter) not in seen:
                seen.add(id(parameter))
                found.append((name, parameter))
        return found

    def parameters(self):
        # type: () -> List[Parameter]
        """Return every distinct parameter."""
        return [parameter for _, parameter in self.named_parameters()]

    def modules(self):
        # type: () -> Iterator[Module]
        """Iterate over this module and all of its descendants."""
        yield self
        for _, child in self._children():
            for module in child.modules():
                yield module

    def train(self, mode=True):
        # type: (bool) -> Module
        """Switch this module and its descendants between training and evaluation."""
        for module in self.modules():
            module.training = mode
        return self

    def eval(self):
        # type: () -> Module
        """Switch to evaluation mode."""
        return self.train(False)

    def zero_grad(self):
        # type: () -> None
        """Clear the gradient of every parameter."""
        for parameter in self.parameters():
            parameter.zero_grad()

    def state_dict(self):
        # type: () -> Dict[str, np.ndarray]
        """Return copies of every parameter's values keyed by dotted name."""
        return OrderedDict((name, p.data.copy()) for name, p in self.named_parameters())

    def load_state_dict(self, state):
        # type: (Dict[str, np.ndarray]) -> None
        """
        Overwrite parameter values in place.

        :param state: Values keyed by dotted name. Must name every parameter, with equal shapes.
        """
        named = OrderedDict(self.named_parameters())
        missing = [name for name in named if name not in state]
        unexpected = [name for name in state if name not in named]
        if missing or unexpected:
            raise ContractError('State does not match module: missing {}, unexpected {}'.format(
                missing, unexpected))

        for name, parameter in named.items():
            value = np.asarray(state[name], dtype=np.float64)
            if value.shape != parameter.shape:
                raise DimensionError('Parameter "{}" has shape {}, state has {}'.format(
                    name, parameter.shape, value.shape))
            parameter.data = value.copy()

    def _children(self):
        # type: () -> Iterator[Tuple[str, Module]]
        for name, value in vars(self).items():
            for item in _contained_modules(name, value):
                yield item

    def _walk_parameters(self, prefix):
        # type: (str) -> Iterator[Tuple[str, Parameter]]
        for name, value in vars(self).items():
            if isinstance(value, Parameter):
                yield prefix + name, value
            elif isinstance(value, dict):
                for key, item in value.items():
                    if isinstance(item, Parameter):
                        yield '{}{}.{}'.format(prefix, name, key), item
        for name, child in self._children():
            for item in child._walk_parameters(prefix + name + '.'):
                yield item


def _contained_modules(name, value):
    # type: (str, Any) -> Iterator[Tuple[str, Module]]
    if isinstance(value, Module):
        yield name, value
    elif isinstance(value, (list, tuple)):
        for i, item in enumerate(value):
            for child in _contained_modules('{}.{}'.format(name, i), item):
                yield child
    elif isinstance(value, dict):
        for key, item in value.items():
            if isinstance(item, Module):
                yield '{}.{}'.format(name, key), item


def module_rng(seed, *path):
    # type: (int, *str) -> np.random.Generator
    """
    Return a generator keyed on a seed and a module path.

    Modules built from the same path draw the same initial values whatever else is built
    alongside them, so models that differ in one component share all other parameters.
    """
    keys = [zlib.crc32(part.encode('utf-8')) for part in path]
    return np.random.default_rng(np.random.SeedSequence([seed] + keys))


def init_normal(rng, shape, std, group=TRANSFORMER):
    # type: (np.random.Generator, Tuple[int, ...], float, str) -> Parameter
    """Create a parameter drawn from a zero-mean normal distribution."""
    return Parameter(rng.normal(0.0, std, size=shape), group)


def init_uniform_fan_in(rng, shape, fan_in, group=TRANSFORMER):
    # type: (np.random.Generator, Tuple[int, ...], int, str) -> Parameter
    """Create a parameter uniform in +-1/sqrt(fan_in), the usual default for affine layers."""
    bound = 1.0 / np.sqrt(max(fan_in, 1))
    return Parameter(rng.uniform(-bound, bound, size=shape), group)


def zeros(shape, group=TRANSFORMER):
    # type: (Tuple[int, ...], str) -> Parameter
    """Create a zero-initialized parameter."""
    return Parameter(np.zeros(shape), group)


class Linear(Module):
    """Affine map over the last axis."""

    def __init__(
            self,
            in_features,  # type: int
            out_features,  # type: int
            rng,  # type: np.random.Generator
            bias=True,  # type: bool
            zero_init=False,  # type: bool
            group=TRANSFORMER  # type: str
    ):
        # type: (...) -> None
        shape = (in_features, out_features)
        if zero_init:
            self.weight = zeros(shape, group)
        else:
            self.weight = init_uniform_fan_in(rng, shape, in_features, group)
        self.bias = zeros((out_features,), group) if bias else None

    def __call__(self, x):
        # type: (Tensor) -> Tensor
        return ops.linear(x, self.weight, self.bias)


class LayerNorm(Module):
    """Layer normalization over the last axis, initialized to the identity affine."""

    def __init__(self, width, group=TRANSFORMER):
        # type: (int, str) -> None
        self.gamma = Parameter(np.ones(width), group)
        self.beta = zeros((width,), group)

    def __call__(self, x):
        # type: (Tensor) -> Tensor
        return ops.layer_norm(x, self.gamma, self.beta)


class Mlp(Module):
    """Two-layer feedforward with the smooth nonlinearity between the layers."""

    def __init__(self, width, hidden, rng):
        # type: (int, int, np.random.Generator) -> None
        self.fc1 = Linear(width, hidden, rng)
        self.fc2 = Linear(hidden, width, rng)

    def __call__(self, x):
        # type: (Tensor) -> Tensor
        return self.fc2(ops.gelu(self.fc1(x)))
