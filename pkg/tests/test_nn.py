"""Tests for parameter containers"""
import numpy as np
import pytest

from fatformer.errors import ContractError, DimensionError
from fatformer.nn import Linear, Mlp, Module, module_rng
from fatformer.tensor import BACKBONE, Parameter


class _Pair(Module):

    def __init__(self):
        rng = np.random.default_rng(0)
        self.first = Linear(2, 3, rng)
        self.layers = [Linear(3, 3, rng, bias=False), Mlp(3, 4, rng)]
        self.tied = self.first.weight
        self.scales = {'a': Parameter(np.ones(1), BACKBONE)}


def test_named_parameters():
    """Names are dotted paths, direct parameters first, and shared parameters appear once."""
    names = [name for name, _ in _Pair().named_parameters()]

    assert names == [
        'tied', 'scales.a',
        'first.bias',
        'layers.0.weight',
        'layers.1.fc1.weight', 'layers.1.fc1.bias', 'layers.1.fc2.weight', 'layers.1.fc2.bias',
    ]


def test_state_dict_round_trip():
    """Loading a state dict restores the values exactly."""
    source, target = _Pair(), _Pair()
    for p in source.parameters():
        p.data = p.data + 1.5

    target.load_state_dict(source.state_dict())

    for (_, a), (_, b) in zip(source.named_parameters(), target.named_parameters()):
        assert np.array_equal(a.data, b.data)


def test_state_dict_is_a_copy():
    """Changing a state dict leaves the module alone."""
    module = _Pair()
    state = module.state_dict()
    state['first.bias'][:] = 7.0

    assert np.all(module.first.bias.data == 0.0)


def test_load_missing_key():
    """Every parameter must be present."""
    module = _Pair()
    state = module.state_dict()
    del state['first.bias']

    with pytest.raises(ContractError):
        module.load_state_dict(state)


def test_load_wrong_shape():
    """Shapes must match."""
    module = _Pair()
    state = module.state_dict()
    state['first.bias'] = np.zeros(5)

    with pytest.raises(DimensionError):
        module.load_state_dict(state)


def test_train_eval_propagates():
    """Mode switches reach every descendant."""
    module = _Pair().eval()

    assert not any(m.training for m in module.modules())
    assert all(m.training for m in module.train().modules())


def test_module_rng_is_path_keyed():
    """Generators depend on the seed and the path only."""
    a = module_rng(3, 'face', 'stage0').standard_normal(4)
    b = module_rng(3, 'face', 'stage0').standard_normal(4)
    c = module_rng(3, 'face', 'stage1').standard_normal(4)
    d = module_rng(4, 'face', 'stage0').standard_normal(4)

    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert not np.array_equal(a, d)


def test_unknown_group():
    """Parameters belong to a known optimizer group."""
    with pytest.raises(ContractError):
        Parameter(np.zeros(1), 'head')
