"""
Differentiable primitives.

Every function takes tensors (or constants, which are wrapped) and returns a tensor whose
backward closure computes the exact vector-Jacobian product. All arithmetic is float64.
"""
from typing import (  # noqa pylint: disable=unused-import
    Any,
    Callable,
    List,
    Optional,
    Sequence,
    Tuple,
    Union,
)

import einops
import numpy as np

from .errors import DimensionError, shape_mismatch
from .tensor import Tensor, as_tensor, record


_GELU_C = np.sqrt(2.0 / np.pi)


def _unbroadcast(grad, shape):
    # type: (np.ndarray, Tuple[int, ...]) -> np.ndarray
    """Sum a broadcast gradient back down to the given shape."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _check_broadcast(what, a, b):
    # type: (str, Tensor, Tensor) -> None
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise shape_mismatch(what, a.shape, b.shape)


def add(a, b):
    # type: (Any, Any) -> Tensor
    """Elementwise sum with broadcasting."""
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast('add', a, b)

    def _backward(grad):
        a.accumulate_grad(_unbroadcast(grad, a.shape))
        b.accumulate_grad(_unbroadcast(grad, b.shape))

    return record(a.data + b.data, (a, b), _backward, 'add')


def sub(a, b):
    # type: (Any, Any) -> Tensor
    """Elementwise difference with broadcasting."""
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast('sub', a, b)

    def _backward(grad):
        a.accumulate_grad(_unbroadcast(grad, a.shape))
        b.accumulate_grad(_unbroadcast(-grad, b.shape))

    return record(a.data - b.data, (a, b), _backward, 'sub')


def mul(a, b):
    # type: (Any, Any) -> Tensor
    """Elementwise product with broadcasting. Scaling is ``mul(x, c)``."""
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast('mul', a, b)

    def _backward(grad):
        a.accumulate_grad(_unbroadcast(grad * b.data, a.shape))
        b.accumulate_grad(_unbroadcast(grad * a.data, b.shape))

    return record(a.data * b.data, (a, b), _backward, 'mul')


def div(a, b):
    # type: (Any, Any) -> Tensor
    """Elementwise quotient with broadcasting."""
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast('div', a, b)
    out = a.data / b.data

    def _backward(grad):
        a.accumulate_grad(_unbroadcast(grad / b.data, a.shape))
        b.accumulate_grad(_unbroadcast(-grad * out / b.data, b.shape))

    return record(out, (a, b), _backward, 'div')


def matmul(a, b):
    # type: (Any, Any) -> Tensor
    """
    Matrix product over the trailing two axes, broadcasting leading axes.

    >>> matmul(Tensor([[1, 2], [3, 4]]), Tensor([[5, 6], [7, 8]])).data.tolist()
    [[19.0, 22.0], [43.0, 50.0]]
    """
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise shape_mismatch('matmul', a.shape, b.shape)
    try:
        np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError:
        raise shape_mismatch('matmul', a.shape, b.shape)

    def _backward(grad):
        a.accumulate_grad(_unbroadcast(np.matmul(grad, np.swapaxes(b.data, -1, -2)), a.shape))
        b.accumulate_grad(_unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), grad), b.shape))

    return record(np.matmul(a.data, b.data), (a, b), _backward, 'matmul')


def exp(x):
    # type: (Any) -> Tensor
    """Elementwise exponential."""
    x = as_tensor(x)
    out = np.exp(x.data)

    def _backward(grad):
        x.accumulate_grad(grad * out)

    return record(out, (x,), _backward, 'exp')


def tanh(x):
    # type: (Any) -> Tensor
    """Elementwise hyperbolic tangent."""
    x = as_tensor(x)
    out = np.tanh(x.data)

    def _backward(grad):
        x.accumulate_grad(grad * (1.0 - out * out))

    return record(out, (x,), _backward, 'tanh')


def gelu(x):
    # type: (Any) -> Tensor
    """
    Smooth nonlinearity: the tanh form of the Gaussian error linear unit.

    >>> gelu(Tensor([0.0])).data.tolist()
    [0.0]
    """
    x = as_tensor(x)
    v = x.data
    inner = _GELU_C * (v + 0.044715 * v ** 3)
    t = np.tanh(inner)
    out = 0.5 * v * (1.0 + t)

    def _backward(grad):
        d_inner = _GELU_C * (1.0 + 3.0 * 0.044715 * v * v)
        local = 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * d_inner
        x.accumulate_grad(grad * local)

    return record(out, (x,), _backward, 'gelu')


def sum(x, axis=None, keepdims=False):  # pylint: disable=redefined-builtin
    # type: (Any, Any, bool) -> Tensor
    """Sum over the given axes."""
    x = as_tensor(x)
    out = np.sum(x.data, axis=axis, keepdims=keepdims)

    def _backward(grad):
        if axis is not None and not keepdims:
            grad = np.expand_dims(grad, axis)
        x.accumulate_grad(np.broadcast_to(grad, x.shape))

    return record(out, (x,), _backward, 'sum')


def mean(x, axis=None, keepdims=False):
    # type: (Any, Any, bool) -> Tensor
    """Mean over the given axes."""
    x = as_tensor(x)
    if axis is None:
        count = x.size
    else:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        count = int(np.prod([x.shape[a] for a in axes]))
    return mul(sum(x, axis, keepdims), 1.0 / count)


def reshape(x, shape):
    # type: (Any, Sequence[int]) -> Tensor
    """Return the same values in a new shape."""
    x = as_tensor(x)
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise shape_mismatch('reshape', x.shape, shape)

    def _backward(grad):
        x.accumulate_grad(grad.reshape(x.shape))

    return record(out, (x,), _backward, 'reshape')


def transpose(x, axes=None):
    # type: (Any, Optional[Sequence[int]]) -> Tensor
    """Permute axes; reverses them when axes is None."""
    x = as_tensor(x)
    axes = tuple(reversed(range(x.ndim))) if not axes else tuple(axes)
    inverse = tuple(np.argsort(axes))

    def _backward(grad):
        x.accumulate_grad(np.transpose(grad, inverse))

    return record(np.transpose(x.data, axes), (x,), _backward, 'transpose')


def moveaxis(x, source, destination):
    # type: (Any, int, int) -> Tensor
    """Move one axis to a new position."""
    x = as_tensor(x)
    order = list(range(x.ndim))
    order.insert(destination % x.ndim, order.pop(source % x.ndim))
    return transpose(x, order)


def rearrange(x, pattern, **axes_lengths):
    # type: (Any, str, **int) -> Tensor
    """
    Rearrange axes with an einops pattern (reshape/transpose only, no reductions).

    The backward pass scatters through the same permutation of element positions.

    >>> rearrange(Tensor(np.arange(4.0).reshape(2, 2)), 'a b -> b a').data.tolist()
    [[0.0, 2.0], [1.0, 3.0]]
    """
    x = as_tensor(x)
    try:
        out = einops.rearrange(x.data, pattern, **axes_lengths)
    except einops.EinopsError as error:
        raise DimensionError('rearrange "{}" on shape {}: {}'.format(pattern, x.shape, error))

    def _backward(grad):
        positions = einops.rearrange(np.arange(x.size).reshape(x.shape), pattern, **axes_lengths)
        flat = np.zeros(x.size)
        flat[positions.reshape(-1)] = grad.reshape(-1)
        x.accumulate_grad(flat.reshape(x.shape))

    return record(np.ascontiguousarray(out), (x,), _backward, 'rearrange')


def getitem(x, index):
    # type: (Any, Any) -> Tensor
    """Index or slice with numpy semantics."""
    x = as_tensor(x)
    if isinstance(index, Tensor):
        index = index.data.astype(np.int64)
    parts = index if isinstance(index, tuple) else (index,)
    advanced = any(isinstance(part, (np.ndarray, list)) for part in parts)

    def _backward(grad):
        full = np.zeros(x.shape)
        if advanced:
            np.add.at(full, index, grad)
        else:
            # Basic indexing selects each element at most once.
            full[index] += grad
        x.accumulate_grad(full)

    return record(np.array(x.data[index]), (x,), _backward, 'getitem')


def take(table, index):
    # type: (Any, np.ndarray) -> Tensor
    """Gather rows of ``table`` along axis 0 by an integer index array."""
    table = as_tensor(table)
    index = np.asarray(index, dtype=np.int64)

    def _backward(grad):
        full = np.zeros(table.shape)
        np.add.at(full, index, grad)
        table.accumulate_grad(full)

    return record(np.take(table.data, index, axis=0), (table,), _backward, 'take')


def concat(tensors, axis=0):
    # type: (Sequence[Any], int) -> Tensor
    """Concatenate along an existing axis."""
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise DimensionError('concat needs at least one tensor')
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        raise shape_mismatch('concat', *[t.shape for t in tensors])

    boundaries = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def _backward(grad):
        for tensor, piece in zip(tensors, np.split(grad, boundaries, axis=axis)):
            tensor.accumulate_grad(piece)

    return record(out, tensors, _backward, 'concat')


def pad(x, widths):
    # type: (Any, Sequence[Tuple[int, int]]) -> Tensor
    """Zero-pad each axis by (before, after)."""
    x = as_tensor(x)
    widths = [tuple(w) for w in widths]
    crop = tuple(slice(before, before + extent) for (before, _), extent in zip(widths, x.shape))

    def _backward(grad):
        x.accumulate_grad(grad[crop])

    return record(np.pad(x.data, widths), (x,), _backward, 'pad')


def roll(x, shifts, axes):
    # type: (Any, Sequence[int], Sequence[int]) -> Tensor
    """Cyclically shift along axes."""
    x = as_tensor(x)
    shifts, axes = tuple(shifts), tuple(axes)

    def _backward(grad):
        x.accumulate_grad(np.roll(grad, tuple(-s for s in shifts), axes))

    return record(np.roll(x.data, shifts, axes), (x,), _backward, 'roll')


def softmax(x, axis=-1):
    # type: (Any, int) -> Tensor
    """
    Numerically stable softmax along an axis.

    >>> softmax(Tensor([1000.0, 0.0, 0.0])).data.round(12).tolist()
    [1.0, 0.0, 0.0]
    """
    x = as_tensor(x)
    shifted = x.data - np.max(x.data, axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / np.sum(e, axis=axis, keepdims=True)

    def _backward(grad):
        dot = np.sum(grad * out, axis=axis, keepdims=True)
        x.accumulate_grad(out * (grad - dot))

    return record(out, (x,), _backward, 'softmax')


def log_softmax(x, axis=-1):
    # type: (Any, int) -> Tensor
    """Numerically stable log-softmax along an axis."""
    x = as_tensor(x)
    shifted = x.data - np.max(x.data, axis=axis, keepdims=True)
    out = shifted - np.log(np.sum(np.exp(shifted), axis=axis, keepdims=True))
    probabilities = np.exp(out)

    def _backward(grad):
        x.accumulate_grad(grad - probabilities * np.sum(grad, axis=axis, keepdims=True))

    return record(out, (x,), _backward, 'log_softmax')


def linear(x, weight, bias=None):
    # type: (Any, Any, Optional[Any]) -> Tensor
    """Affine map over the last axis; weight is laid out (in, out)."""
    x, weight = as_tensor(x), as_tensor(weight)
    if weight.ndim != 2 or x.shape[-1] != weight.shape[0]:
        raise shape_mismatch('linear', x.shape, weight.shape)

    out = matmul(x, weight)
    if bias is not None:
        out = add(out, bias)
    return out


def layer_norm(x, gamma, beta, eps=1e-5):
    # type: (Any, Any, Any, float) -> Tensor
    """Normalize over the last axis, then scale by gamma and shift by beta."""
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    if gamma.shape != (x.shape[-1],) or beta.shape != (x.shape[-1],):
        raise shape_mismatch('layer_norm', x.shape, gamma.shape, beta.shape)

    width = x.shape[-1]
    centered = x.data - x.data.mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt((centered * centered).mean(axis=-1, keepdims=True) + eps)
    normalized = centered * inv_std

    def _backward(grad):
        g_norm = grad * gamma.data
        x.accumulate_grad(inv_std / width * (
            width * g_norm
            - g_norm.sum(axis=-1, keepdims=True)
            - normalized * (g_norm * normalized).sum(axis=-1, keepdims=True)
        ))
        reduce_axes = tuple(range(x.ndim - 1))
        gamma.accumulate_grad((grad * normalized).sum(axis=reduce_axes))
        beta.accumulate_grad(grad.sum(axis=reduce_axes))

    out = normalized * gamma.data + beta.data
    return record(out, (x, gamma, beta), _backward, 'layer_norm')


def conv1d_channels(x, weight, bias=None, axis=1):
    # type: (Any, Any, Optional[Any], int) -> Tensor
    """
    Kernel-1 convolution across the channel axis: a per-position affine map of channels.

    :param weight: Kernel of shape (out_channels, in_channels).
    :param bias: Optional bias of shape (out_channels,).
    """
    x, weight = as_tensor(x), as_tensor(weight)
    if weight.ndim != 2 or x.shape[axis] != weight.shape[1]:
        raise shape_mismatch('conv1d_channels', x.shape, weight.shape)

    channels_last = moveaxis(x, axis, -1)
    out = linear(channels_last, transpose(weight), bias)
    return moveaxis(out, -1, axis)


def conv3d(x, weight, bias=None, stride=(1, 1, 1)):
    # type: (Any, Any, Optional[Any], Sequence[int]) -> Tensor
    """
    Dense 3D convolution with zero "same" padding (odd kernels).

    :param x: Input of shape B x C_in x D x H x W.
    :param weight: Kernel of shape C_out x C_in x kd x kh x kw.
    :param bias: Optional bias of shape (C_out,).
    :param stride: Per-axis stride; with stride s the output extent is ceil(extent / s).
    """
    x, weight = as_tensor(x), as_tensor(weight)
    if x.ndim != 5 or weight.ndim != 5 or x.shape[1] != weight.shape[1]:
        raise shape_mismatch('conv3d', x.shape, weight.shape)

    kernel = weight.shape[2:]
    if any(k % 2 == 0 for k in kernel):
        raise DimensionError('conv3d needs odd kernel extents, got {}'.format(kernel))

    half = [k // 2 for k in kernel]
    padded = np.pad(x.data, [(0, 0), (0, 0)] + [(h, h) for h in half])
    out_extents = [(n + 2 * h - k) // s + 1
                   for n, h, k, s in zip(x.shape[2:], half, kernel, stride)]
    if any(e <= 0 for e in out_extents):
        raise shape_mismatch('conv3d', x.shape, weight.shape)

    def _window(a, b, c):
        return (
            slice(None), slice(None),
            slice(a, a + stride[0] * (out_extents[0] - 1) + 1, stride[0]),
            slice(b, b + stride[1] * (out_extents[1] - 1) + 1, stride[1]),
            slice(c, c + stride[2] * (out_extents[2] - 1) + 1, stride[2]),
        )

    offsets = [(a, b, c)
               for a in range(kernel[0]) for b in range(kernel[1]) for c in range(kernel[2])]

    out = np.zeros((x.shape[0], weight.shape[0]) + tuple(out_extents))
    for a, b, c in offsets:
        out += np.einsum('bcdhw,oc->bodhw', padded[_window(a, b, c)], weight.data[:, :, a, b, c],
                         optimize=True)

    def _backward(grad):
        grad_padded = np.zeros(padded.shape)
        grad_weight = np.zeros(weight.shape)
        for a, b, c in offsets:
            window = _window(a, b, c)
            grad_weight[:, :, a, b, c] = np.einsum(
                'bodhw,bcdhw->oc', grad, padded[window], optimize=True)
            grad_padded[window] += np.einsum(
                'bodhw,oc->bcdhw', grad, weight.data[:, :, a, b, c], optimize=True)
        crop = (slice(None), slice(None)) + tuple(
            slice(h, h + n) for h, n in zip(half, x.shape[2:]))
        x.accumulate_grad(grad_padded[crop])
        weight.accumulate_grad(grad_weight)

    result = record(out, (x, weight), _backward, 'conv3d')
    if bias is not None:
        result = add(result, reshape(bias, (1, -1, 1, 1, 1)))
    return result


def conv_2plus1d(
        x,  # type: Any
        spatial_weight,  # type: Any
        spatial_bias,  # type: Any
        temporal_weight,  # type: Any
        temporal_bias,  # type: Any
        spatial_stride=1,  # type: int
        activation=gelu  # type: Optional[Callable[[Tensor], Tensor]]
):
    # type: (...) -> Tensor
    """
    Factorized (2+1)D convolution: a spatial 1 x k x k convolution then a temporal k x 1 x 1
    convolution, each followed by its bias and the nonlinearity.

    :param spatial_weight: C_mid x C_in x 1 x k x k.
    :param temporal_weight: C_out x C_mid x k x 1 x 1.
    :param activation: Smooth nonlinearity, or None to disable it.
    """
    spatial_weight, temporal_weight = as_tensor(spatial_weight), as_tensor(temporal_weight)
    if spatial_weight.shape[2] != 1 or temporal_weight.shape[3:] != (1, 1):
        raise shape_mismatch('conv_2plus1d', spatial_weight.shape, temporal_weight.shape)
    if temporal_weight.shape[1] != spatial_weight.shape[0]:
        raise shape_mismatch('conv_2plus1d', spatial_weight.shape, temporal_weight.shape)

    out = conv3d(x, spatial_weight, spatial_bias, (1, spatial_stride, spatial_stride))
    if activation is not None:
        out = activation(out)
    out = conv3d(out, temporal_weight, temporal_bias)
    if activation is not None:
        out = activation(out)
    return out


def adaptive_avg_pool3d(x):
    # type: (Any) -> Tensor
    """Reduce B x C x D x H x W to B x C x 1 x 1 x 1 by averaging."""
    x = as_tensor(x)
    if x.ndim != 5:
        raise DimensionError('adaptive_avg_pool3d expects B x C x D x H x W, got {}'.format(
            x.shape))
    return mean(x, axis=(2, 3, 4), keepdims=True)


def drop_path(x, probability, training, rng):
    # type: (Any, float, bool, Optional[np.random.Generator]) -> Tensor
    """
    Stochastic depth gate for a residual branch with a leading batch axis.

    During training each sample's branch is dropped with the given probability and kept
    samples are rescaled by 1 / (1 - p), so the expectation matches evaluation, where the gate
    is the identity. A probability of 1 always bypasses the branch.
    """
    x = as_tensor(x)
    if not training or probability <= 0.0:
        return x
    if probability >= 1.0:
        return mul(x, 0.0)

    keep = (rng.random(x.shape[0]) >= probability).astype(np.float64) / (1.0 - probability)
    return mul(x, keep.reshape((-1,) + (1,) * (x.ndim - 1)))


def mse_loss(prediction, target):
    # type: (Any, Any) -> Tensor
    """Mean squared error over all elements."""
    prediction, target = as_tensor(prediction), as_tensor(target)
    if prediction.shape != target.shape:
        raise shape_mismatch('mse_loss', prediction.shape, target.shape)
    diff = sub(prediction, target)
    return mean(mul(diff, diff))


def cross_entropy(logits, labels):
    # type: (Any, np.ndarray) -> Tensor
    """Mean softmax cross-entropy of N x k logits against integer labels."""
    logits = as_tensor(logits)
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise shape_mismatch('cross_entropy', logits.shape, labels.shape)

    log_probabilities = log_softmax(logits, axis=-1)
    picked = getitem(log_probabilities, (np.arange(labels.size), labels))
    return mul(mean(picked), -1.0)
