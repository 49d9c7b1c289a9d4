"""Tests for the finite-difference gradient suite"""
import pytest

from fatformer import gradcheck
from fatformer.errors import ContractError


@pytest.mark.parametrize('name', gradcheck.check_names())
def test_gradient_check(name):
    """Every differentiable operation agrees with central differences."""
    result, = gradcheck.run_checks([name], seeds=20)

    assert result.passed, '{} max relative error {:.3e} over {:.0e}'.format(
        name, result.max_error, result.tolerance)


def test_suite_covers_forcing_variants():
    """Each forcing variant has its own check."""
    names = gradcheck.check_names()

    for variant in ('fa_pos_encoding', 'fa_linear_bias', 'fa_attn_bias',
                    'fa_channel_concat', 'fa_input_add'):
        assert variant in names

    assert 'tiny_model' in names


def test_unknown_check():
    """Unknown check names are rejected before anything runs."""
    with pytest.raises(ContractError):
        gradcheck.run_checks(['conv4d'])


def test_failed_filters():
    """Only results over tolerance are reported as failures."""
    results = [
        gradcheck.GradResult(name='a', max_error=1e-9, tolerance=1e-5, passed=True),
        gradcheck.GradResult(name='b', max_error=1e-2, tolerance=1e-5, passed=False),
    ]

    assert [r.name for r in gradcheck.failed(results)] == ['b']


def test_registration_is_unique():
    """A check name can only be registered once."""
    with pytest.raises(ContractError):
        gradcheck.register('add')(lambda rng: None)
