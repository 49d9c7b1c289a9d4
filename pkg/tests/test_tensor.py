"""Tests for the differentiable tensor core"""
import numpy as np
import pytest

from fatformer import ops
from fatformer.errors import ContractError, DimensionError
from fatformer.tensor import Parameter, Tensor, grad_check, no_grad


def test_backward_accumulates_shared_uses():
    """A tensor used twice receives the sum of both gradient paths."""
    x = Parameter([1.0, -2.0])
    loss = ops.sum(ops.add(ops.mul(x, 3.0), ops.mul(x, x)))
    loss.backward()

    assert x.grad.tolist() == [5.0, -1.0]


def test_backward_twice_does_not_double_intermediates():
    """Repeated backward passes accumulate into leaves only."""
    x = Parameter([2.0])
    loss = ops.sum(ops.exp(x))
    loss.backward()
    loss.backward()

    assert x.grad[0] == pytest.approx(2.0 * np.exp(2.0), rel=1e-12)


def test_backward_needs_scalar():
    """Seedless backward on a vector is a contract error."""
    x = Parameter([1.0, 2.0])

    with pytest.raises(ContractError):
        ops.mul(x, 2.0).backward()


def test_no_grad_records_nothing():
    """Operations inside no_grad produce constants."""
    x = Parameter([1.0, 2.0])
    with no_grad():
        y = ops.mul(x, x)

    assert not y.requires_grad
    assert ops.mul(x, x).requires_grad


def test_broadcast_mismatch():
    """Incompatible shapes name both shapes."""
    with pytest.raises(DimensionError) as exception_info:
        ops.add(Tensor(np.zeros((2, 3))), Tensor(np.zeros(4)))

    assert '(2, 3) and (4,)' in str(exception_info.value)


def test_matmul_mismatch():
    """Inner extents must agree."""
    with pytest.raises(DimensionError):
        ops.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((4, 2))))


def test_grad_check_step_range():
    """Finite-difference steps outside [1e-6, 1e-4] are refused."""
    with pytest.raises(ContractError):
        grad_check(lambda t: ops.sum(t), Tensor([1.0]), eps=1e-2)


def test_grad_check_detects_wrong_gradient():
    """A deliberately wrong backward is reported as a large error."""
    def _wrong(t):
        doubled = Tensor(t.data * 2.0, requires_grad=True, parents=(t,), op='wrong')
        doubled._backward = t.accumulate_grad  # missing factor 2
        return ops.sum(doubled)

    assert grad_check(_wrong, Tensor([0.5, 1.5])) > 0.4


def test_grad_check_strided_values():
    """Values held in a transposed view are perturbed and restored in place."""
    x = Tensor(np.zeros((2, 3)))
    x.data = np.arange(6.0).reshape(3, 2).T

    assert grad_check(lambda t: ops.sum(ops.mul(t, t)), x) < 1e-6
    assert np.array_equal(x.data, np.arange(6.0).reshape(3, 2).T)


class TestSoftmax(object):
    """Softmax normalization"""

    def test_rows_sum_to_one(self):
        """Every slice along the axis sums to one."""
        rng = np.random.default_rng(3)
        logits = rng.standard_normal((4, 5, 7)) * 30.0

        for axis in (0, 1, 2):
            weights = ops.softmax(logits, axis=axis).data
            assert np.all(weights >= 0.0)
            assert np.allclose(weights.sum(axis=axis), 1.0, atol=1e-9, rtol=0)

    def test_shift_invariant(self):
        """Adding a constant along the axis changes nothing."""
        rng = np.random.default_rng(4)
        logits = rng.standard_normal((3, 6))
        shift = rng.standard_normal((3, 1)) * 100.0

        expected = ops.softmax(logits).data
        actual = ops.softmax(logits + shift).data

        assert np.allclose(actual, expected, atol=1e-12, rtol=0)

    def test_log_softmax_matches_log(self):
        """log_softmax is the logarithm of softmax."""
        logits = np.array([[1.0, 2.0, 3.0], [-1.0, 0.0, 1000.0]])

        expected = np.log(ops.softmax(logits).data[0])
        actual = ops.log_softmax(logits).data

        assert np.allclose(actual[0], expected, atol=1e-12)
        assert np.isfinite(actual).all()


def test_reshape_transpose_round_trip():
    """Reshape and transpose round trips are bit-exact."""
    x = np.random.default_rng(5).standard_normal((2, 3, 4))

    reshaped = ops.reshape(ops.reshape(x, (6, 4)), (2, 3, 4)).data
    transposed = ops.transpose(ops.transpose(x, (2, 0, 1)), (1, 2, 0)).data
    rearranged = ops.rearrange(ops.rearrange(x, 'a b c -> c (a b)'), 'c (a b) -> a b c', a=2).data

    assert np.array_equal(reshaped, x)
    assert np.array_equal(transposed, x)
    assert np.array_equal(rearranged, x)


def test_pad_roll_inverse():
    """Rolling back and cropping recovers the input."""
    x = np.arange(12.0).reshape(3, 4)
    padded = ops.roll(ops.pad(x, [(1, 0), (0, 2)]), (1, -1), (0, 1))
    restored = ops.roll(padded, (-1, 1), (0, 1)).data[1:, :4]

    assert np.array_equal(restored, x)


class TestConv2Plus1D(object):
    """Factorized convolution against a dense 3D convolution"""

    def test_spatial_dirac(self):
        """A Dirac spatial kernel leaves a temporal-k dense convolution."""
        rng = np.random.default_rng(6)
        x = rng.standard_normal((2, 2, 5, 4, 4))
        spatial = np.zeros((2, 2, 1, 3, 3))
        spatial[0, 0, 0, 1, 1] = spatial[1, 1, 0, 1, 1] = 1.0
        temporal = rng.standard_normal((3, 2, 3, 1, 1))

        dense = np.zeros((3, 2, 3, 3, 3))
        dense[:, :, :, 1, 1] = temporal[:, :, :, 0, 0]

        actual = ops.conv_2plus1d(x, spatial, np.zeros(2), temporal, np.zeros(3),
                                  activation=None).data
        expected = ops.conv3d(x, dense).data

        assert np.allclose(actual, expected, atol=1e-12, rtol=0)

    def test_temporal_dirac(self):
        """A Dirac temporal kernel leaves a spatial-k dense convolution."""
        rng = np.random.default_rng(7)
        x = rng.standard_normal((1, 2, 3, 5, 5))
        spatial = rng.standard_normal((2, 2, 1, 3, 3))
        temporal = np.zeros((2, 2, 3, 1, 1))
        temporal[0, 0, 1] = temporal[1, 1, 1] = 1.0

        dense = np.zeros((2, 2, 3, 3, 3))
        dense[:, :, 1] = spatial[:, :, 0]

        actual = ops.conv_2plus1d(x, spatial, np.zeros(2), temporal, np.zeros(2),
                                  activation=None).data
        expected = ops.conv3d(x, dense).data

        assert np.allclose(actual, expected, atol=1e-12, rtol=0)

    def test_stride(self):
        """Strided output extents are ceil(extent / stride)."""
        x = np.zeros((1, 1, 3, 5, 6))
        out = ops.conv3d(x, np.zeros((2, 1, 1, 3, 3)), stride=(1, 2, 2))

        assert out.shape == (1, 2, 3, 3, 3)

    def test_even_kernel(self):
        """Same padding needs odd kernels."""
        with pytest.raises(DimensionError):
            ops.conv3d(np.zeros((1, 1, 2, 4, 4)), np.zeros((1, 1, 1, 2, 2)))


def test_drop_path_identity_in_evaluation():
    """The stochastic depth gate passes values through outside training."""
    x = np.ones((4, 3))
    rng = np.random.default_rng(0)

    assert np.array_equal(ops.drop_path(x, 0.5, False, rng).data, x)
    assert np.array_equal(ops.drop_path(x, 1.0, True, rng).data, np.zeros((4, 3)))


def test_drop_path_rescales_kept_samples():
    """Kept samples are scaled by 1 / (1 - p), dropped ones zeroed."""
    out = ops.drop_path(np.ones((200, 2)), 0.25, True, np.random.default_rng(1)).data

    assert set(np.unique(out)) <= {0.0, 1.0 / 0.75}
    assert np.all(out[:, 0] == out[:, 1])


def test_cross_entropy_value():
    """Cross-entropy of uniform logits is log(k)."""
    loss = ops.cross_entropy(np.zeros((3, 4)), np.array([0, 1, 3]))

    assert loss.item() == pytest.approx(np.log(4.0), abs=1e-12)
