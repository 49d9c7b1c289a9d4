"""
A minimal differentiable tensor.

A :class:`Tensor` wraps a float64 numpy array. Operations on tensors that require gradients
record a closure computing their vector-Jacobian product; :meth:`Tensor.backward` walks the
recorded graph in reverse topological order.

>>> x = Parameter([1.0, 2.0, 3.0])
>>> loss = (x * x).sum()
>>> loss.backward()
>>> x.grad.tolist()
[2.0, 4.0, 6.0]
"""
import contextlib
import threading
from typing import (  # noqa pylint: disable=unused-import
    Any,
    Callable,
    Iterator,
    List,
    Optional,
    Sequence,
    Tuple,
)

import numpy as np

from .errors import ContractError


BACKBONE = 'backbone'
TRANSFORMER = 'transformer'
PARAMETER_GROUPS = (BACKBONE, TRANSFORMER)

_grad_mode = threading.local()


def is_grad_enabled():
    # type: () -> bool
    """Return whether operations currently record the graph."""
    return getattr(_grad_mode, 'enabled', True)


@contextlib.contextmanager
def no_grad():
    # type: () -> Iterator[None]
    """Disable graph recording for the enclosed block, e.g. for evaluation forwards."""
    previous = is_grad_enabled()
    _grad_mode.enabled = False
    try:
        yield
    finally:
        _grad_mode.enabled = previous


class Tensor(object):
    """An N-dimensional float64 array with an optional gradient slot."""

    # Make numpy defer to Tensor's reflected operators.
    __array_priority__ = 1000

    def __init__(
            self,
            data,  # type: Any
            requires_grad=False,  # type: bool
            parents=(),  # type: Sequence[Tensor]
            op=''  # type: str
    ):
        # type: (...) -> None
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad = None  # type: Optional[np.ndarray]
        self._parents = tuple(parents)
        self._backward = None  # type: Optional[Callable[[np.ndarray], None]]
        self._op = op

    @property
    def shape(self):
        # type: () -> Tuple[int, ...]
        """Get the extents of the tensor."""
        return self.data.shape

    @property
    def ndim(self):
        # type: () -> int
        """Get the rank of the tensor."""
        return self.data.ndim

    @property
    def size(self):
        # type: () -> int
        """Get the number of stored values."""
        return int(self.data.size)

    def item(self):
        # type: () -> float
        """Return the value of a single-element tensor as a float."""
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def numpy(self):
        # type: () -> np.ndarray
        """Return a copy of the underlying values."""
        return self.data.copy()

    def detach(self):
        # type: () -> Tensor
        """Return a tensor sharing no graph with this one."""
        return Tensor(self.data)

    def zero_grad(self):
        # type: () -> None
        """Clear the gradient slot."""
        self.grad = None

    def accumulate_grad(self, grad):
        # type: (np.ndarray) -> None
        """Add a contribution to the gradient slot."""
        if not self.requires_grad:
            return

        if self.grad is None:
            self.grad = np.array(grad, dtype=np.float64).reshape(self.shape)
        else:
            self.grad = self.grad + grad

    def backward(self, grad=None):
        # type: (Optional[np.ndarray]) -> None
        """
        Compute gradients of this tensor with respect to every tensor that requires them.

        :param grad: Seed gradient. Defaults to ones, which requires a single-element tensor.
        """
        if grad is None:
            if self.size != 1:
                raise ContractError(
                    'backward() without a seed requires a scalar, got shape {}'.format(self.shape))
            grad = np.ones(self.shape)

        order = _topological_order(self)

        # Intermediate gradients of a previous pass are stale.
        for node in order:
            if node._backward is not None:
                node.grad = None

        self.accumulate_grad(np.asarray(grad, dtype=np.float64))

        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def __repr__(self):
        return 'Tensor(shape={}, requires_grad={}, op={!r})'.format(
            self.shape, self.requires_grad, self._op)

    # Arithmetic sugar; the operations themselves live in fatformer.ops.

    def __add__(self, other):
        return ops.add(self, other)

    def __radd__(self, other):
        return ops.add(other, self)

    def __sub__(self, other):
        return ops.sub(self, other)

    def __rsub__(self, other):
        return ops.sub(other, self)

    def __mul__(self, other):
        return ops.mul(self, other)

    def __rmul__(self, other):
        return ops.mul(other, self)

    def __truediv__(self, other):
        return ops.div(self, other)

    def __rtruediv__(self, other):
        return ops.div(other, self)

    def __neg__(self):
        return ops.mul(self, -1.0)

    def __matmul__(self, other):
        return ops.matmul(self, other)

    def __getitem__(self, index):
        return ops.getitem(self, index)

    def sum(self, axis=None, keepdims=False):
        # type: (Any, bool) -> Tensor
        """Sum over the given axes."""
        return ops.sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        # type: (Any, bool) -> Tensor
        """Mean over the given axes."""
        return ops.mean(self, axis, keepdims)

    def reshape(self, *shape):
        # type: (*Any) -> Tensor
        """Return a tensor with the same values in a new shape."""
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)

    def transpose(self, *axes):
        # type: (*int) -> Tensor
        """Permute the axes."""
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return ops.transpose(self, axes)


class Parameter(Tensor):
    """A learnable tensor tagged with the optimizer group it belongs to."""

    def __init__(
            self,
            data,  # type: Any
            group=TRANSFORMER  # type: str
    ):
        # type: (...) -> None
        if group not in PARAMETER_GROUPS:
            raise ContractError('Unknown parameter group "{}", expected one of {}'.format(
                group, ', '.join(PARAMETER_GROUPS)))

        super(Parameter, self).__init__(data, requires_grad=True)
        self.group = group

    def __repr__(self):
        return 'Parameter(shape={}, group={!r})'.format(self.shape, self.group)


def as_tensor(value):
    # type: (Any) -> Tensor
    """Wrap a constant as a tensor, passing tensors through."""
    if isinstance(value, Tensor):
        return value

    return Tensor(value)


def record(
        data,  # type: np.ndarray
        parents,  # type: Sequence[Tensor]
        backward,  # type: Callable[[np.ndarray], None]
        op  # type: str
):
    # type: (...) -> Tensor
    """
    Create the result of an operation, attaching the backward closure when a parent needs it.

    The closure receives the output gradient and must call ``accumulate_grad`` on the parents.
    """
    needs_grad = is_grad_enabled() and any(parent.requires_grad for parent in parents)
    if not needs_grad:
        return Tensor(data, op=op)

    out = Tensor(data, requires_grad=True, parents=parents, op=op)
    out._backward = backward
    return out


def grad_check(
        f,  # type: Callable[[Tensor], Tensor]
        x,  # type: Tensor
        eps=1e-6  # type: float
):
    # type: (...) -> float
    """
    Compare the reverse-mode gradient of a scalar function with central differences.

    :param f: Scalar-valued differentiable function of ``x``.
    :param x: Point at which to check. Its values are perturbed in place and restored.
    :param eps: Finite-difference step in [1e-6, 1e-4].

    :return: max over coordinates of ``|analytic - numeric| / max(1, |numeric|)``.

    >>> grad_check(lambda t: (t * t).sum(), Tensor([0.5, -1.5, 2.0])) < 1e-8
    True
    """
    if not 1e-6 <= eps <= 1e-4:
        raise ContractError('grad_check step must lie in [1e-6, 1e-4], got {}'.format(eps))

    x.requires_grad = True
    x.grad = None
    out = f(x)
    if out.size != 1:
        raise ContractError('grad_check needs a scalar objective, got shape {}'.format(out.shape))

    out.backward()
    analytic = x.grad if x.grad is not None else np.zeros(x.shape)

    numeric = np.zeros(x.shape)
    with no_grad():
        for index in np.ndindex(*x.shape):
            original = x.data[index]
            x.data[index] = original + eps
            f_plus = f(x).item()
            x.data[index] = original - eps
            f_minus = f(x).item()
            x.data[index] = original
            numeric[index] = (f_plus - f_minus) / (2.0 * eps)

    error = np.abs(analytic - numeric) / np.maximum(1.0, np.abs(numeric))
    return float(error.max()) if error.size else 0.0


def _topological_order(root):
    # type: (Tensor) -> List[Tensor]
    """Return the graph below root with every node after its parents."""
    order = []  # type: List[Tensor]
    visited = set()
    stack = [(root, False)]

    # Iterative post-order; deep transformer graphs overflow the recursion limit.
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in visited:
                stack.append((parent, False))

    return order


from . import ops  # noqa: E402 pylint: disable=wrong-import-position
