"""
Dynamic reverse-mode tape over dense numpy blocks.

Every operation on a ``Tensor`` records its parents together with a closure
mapping the upstream gradient to the parent's contribution. ``backward``
walks the recorded graph once in reverse topological order.
"""

import threading
from contextlib import contextmanager
from typing import Callable
from typing import Dict
from typing import Iterator
from typing import List
from typing import Optional
from typing import Sequence
from typing import Tuple
from typing import Union

import numpy as np

from exceptions import NonFiniteError
from exceptions import ShapeError

GradFn = Callable[[np.ndarray], np.ndarray]
Operand = Union["Tensor", float, int, np.ndarray]

_state = threading.local()


def is_grad_enabled() -> bool:
    return getattr(_state, "enabled", True)


@contextmanager
def no_grad() -> Iterator[None]:
    """Disable recording for the current thread (frozen-weight inference)"""
    previous = is_grad_enabled()
    _state.enabled = False
    try:
        yield
    finally:
        _state.enabled = previous


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to ``shape``"""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    """A dense block of reals plus the tape entry that produced it"""

    __array_priority__ = 100.0
    __array_ufunc__ = None

    def __init__(
        self,
        value,
        requires_grad: bool = False,
        _parents: Sequence[Tuple["Tensor", GradFn]] = (),
        _op: str = "",
    ):
        self.value = np.asarray(value, dtype=float)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self._parents = tuple(_parents)
        self._op = _op

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.value.shape

    @property
    def ndim(self) -> int:
        return self.value.ndim

    def numpy(self) -> np.ndarray:
        return self.value

    def detach(self) -> "Tensor":
        return Tensor(self.value.copy())

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self._op or 'leaf'})"

    def __len__(self):
        return len(self.value)

    @staticmethod
    def _make(
        value: np.ndarray, parents: Sequence[Tuple["Tensor", GradFn]], op: str
    ) -> "Tensor":
        if not is_grad_enabled():
            return Tensor(value)
        tracked = [(p, fn) for p, fn in parents if p.requires_grad]
        return Tensor(value, requires_grad=bool(tracked), _parents=tracked, _op=op)

    # arithmetic

    def __add__(self, other: Operand) -> "Tensor":
        other = as_tensor(other)
        return Tensor._make(
            self.value + other.value,
            (
                (self, lambda g: _unbroadcast(g, self.shape)),
                (other, lambda g: _unbroadcast(g, other.shape)),
            ),
            "add",
        )

    def __radd__(self, other: Operand) -> "Tensor":
        return self + other

    def __neg__(self) -> "Tensor":
        return Tensor._make(-self.value, ((self, lambda g: -g),), "neg")

    def __sub__(self, other: Operand) -> "Tensor":
        other = as_tensor(other)
        return Tensor._make(
            self.value - other.value,
            (
                (self, lambda g: _unbroadcast(g, self.shape)),
                (other, lambda g: -_unbroadcast(g, other.shape)),
            ),
            "sub",
        )

    def __rsub__(self, other: Operand) -> "Tensor":
        return as_tensor(other) - self

    def __mul__(self, other: Operand) -> "Tensor":
        other = as_tensor(other)
        a, b = self.value, other.value
        return Tensor._make(
            a * b,
            (
                (self, lambda g: _unbroadcast(g * b, self.shape)),
                (other, lambda g: _unbroadcast(g * a, other.shape)),
            ),
            "mul",
        )

    def __rmul__(self, other: Operand) -> "Tensor":
        return self * other

    def __truediv__(self, other: Operand) -> "Tensor":
        other = as_tensor(other)
        a, b = self.value, other.value
        return Tensor._make(
            a / b,
            (
                (self, lambda g: _unbroadcast(g / b, self.shape)),
                (other, lambda g: _unbroadcast(-g * a / (b * b), other.shape)),
            ),
            "div",
        )

    def __rtruediv__(self, other: Operand) -> "Tensor":
        return as_tensor(other) / self

    def __pow__(self, exponent: float) -> "Tensor":
        if isinstance(exponent, Tensor):
            raise TypeError("only constant exponents are supported")
        a = self.value
        return Tensor._make(
            a**exponent,
            ((self, lambda g: g * exponent * a ** (exponent - 1)),),
            f"pow{exponent}",
        )

    def __matmul__(self, other: "Tensor") -> "Tensor":
        other = as_tensor(other)
        a, b = self.value, other.value
        if b.ndim != 2 or a.shape[-1] != b.shape[0]:
            raise ShapeError(f"matmul shapes {a.shape} and {b.shape} do not align")

        def grad_a(g: np.ndarray) -> np.ndarray:
            return g @ b.T

        def grad_b(g: np.ndarray) -> np.ndarray:
            if a.ndim == 1:
                return np.outer(a, g)
            return a.reshape(-1, a.shape[-1]).T @ g.reshape(-1, b.shape[1])

        return Tensor._make(a @ b, ((self, grad_a), (other, grad_b)), "matmul")

    @property
    def T(self) -> "Tensor":
        if self.ndim != 2:
            raise ShapeError("transpose is defined for 2-d tensors only")
        return Tensor._make(self.value.T, ((self, lambda g: g.T),), "transpose")

    # elementwise

    def tanh(self) -> "Tensor":
        out = np.tanh(self.value)
        return Tensor._make(out, ((self, lambda g: g * (1.0 - out * out)),), "tanh")

    def sigmoid(self) -> "Tensor":
        out = 0.5 * (1.0 + np.tanh(0.5 * self.value))
        return Tensor._make(
            out, ((self, lambda g: g * out * (1.0 - out)),), "sigmoid"
        )

    def exp(self) -> "Tensor":
        out = np.exp(self.value)
        return Tensor._make(out, ((self, lambda g: g * out),), "exp")

    def sqrt(self) -> "Tensor":
        out = np.sqrt(self.value)
        return Tensor._make(out, ((self, lambda g: 0.5 * g / out),), "sqrt")

    # reductions and reshaping

    def sum(self, axis: Optional[int] = None, keepdims: bool = False) -> "Tensor":
        shape = self.shape

        def grad(g: np.ndarray) -> np.ndarray:
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return np.broadcast_to(g, shape).copy()

        return Tensor._make(
            self.value.sum(axis=axis, keepdims=keepdims), ((self, grad),), "sum"
        )

    def mean(self, axis: Optional[int] = None, keepdims: bool = False) -> "Tensor":
        count = self.value.size if axis is None else self.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    def reshape(self, *shape) -> "Tensor":
        original = self.shape
        return Tensor._make(
            self.value.reshape(*shape),
            ((self, lambda g: g.reshape(original)),),
            "reshape",
        )

    def __getitem__(self, index) -> "Tensor":
        shape = self.shape

        def grad(g: np.ndarray) -> np.ndarray:
            full = np.zeros(shape)
            np.add.at(full, index, g)
            return full

        return Tensor._make(self.value[index], ((self, grad),), "getitem")


def as_tensor(value: Operand) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum([0] + sizes)
    parents = []
    for i, t in enumerate(tensors):
        lo, hi = bounds[i], bounds[i + 1]

        def grad(g: np.ndarray, lo=lo, hi=hi) -> np.ndarray:
            return np.take(g, np.arange(lo, hi), axis=axis)

        parents.append((t, grad))
    return Tensor._make(
        np.concatenate([t.value for t in tensors], axis=axis), parents, "concat"
    )


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    parents = []
    for i, t in enumerate(tensors):
        parents.append((t, lambda g, i=i: np.take(g, i, axis=axis)))
    return Tensor._make(
        np.stack([t.value for t in tensors], axis=axis), parents, "stack"
    )


def _topological_order(root: Tensor) -> List[Tensor]:
    """Parents before children, each node once"""
    order: List[Tensor] = []
    visited = set()
    pending: List[Tuple[Tensor, bool]] = [(root, False)]
    while pending:
        node, expanded = pending.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        pending.append((node, True))
        for parent, _ in node._parents:
            if id(parent) not in visited:
                pending.append((parent, False))
    return order


def backward(output: Tensor, leaves: Sequence[Tensor]) -> List[np.ndarray]:
    """
    Gradients of a scalar ``output`` with respect to each of ``leaves``.

    Leaves that the output does not depend on get zero arrays.
    """
    if output.value.size != 1:
        raise ShapeError(f"backward needs a scalar output, got shape {output.shape}")

    order = _topological_order(output)
    for node in order:
        if not np.all(np.isfinite(node.value)):
            raise NonFiniteError(f"non-finite forward value in '{node._op or 'leaf'}'")

    grads: Dict[int, np.ndarray] = {id(output): np.ones_like(output.value)}
    for node in reversed(order):
        g = grads.get(id(node))
        if g is None:
            continue
        for parent, fn in node._parents:
            contribution = fn(g)
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + contribution
            else:
                grads[key] = contribution

    return [
        grads[id(leaf)].reshape(leaf.shape)
        if id(leaf) in grads
        else np.zeros_like(leaf.value)
        for leaf in leaves
    ]
