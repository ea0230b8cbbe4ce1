"""Minimal reverse-mode differentiation over dense numpy arrays.

Only the primitives the modularity loss needs are provided: matrix products
(with an optional constant sparse operand), elementwise arithmetic, square
root, SELU, row softmax, reductions, trace and the Frobenius norm. Numpy
functions outside that set raise :class:`UnsupportedPrimitive` when handed a
:class:`Tensor` instead of silently dropping the gradient.
"""

from __future__ import annotations

from typing import Callable, Dict

import numpy as np
import scipy.sparse as sp

from modmon.errors import UnsupportedPrimitive

ParameterSet = Dict[str, np.ndarray]

SELU_ALPHA = 1.6732632423543772
SELU_SCALE = 1.0507009873554805


class Tensor:
    __slots__ = ("value", "grad", "_parents", "_backward", "requires_grad")
    __array_priority__ = 1000

    def __init__(self, value, requires_grad=False, parents=(), backward=None):
        self.value = value if sp.issparse(value) else np.asarray(value, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)
        self._parents = parents
        self._backward = backward

    def __array_ufunc__(self, ufunc, method, *inputs, **kwargs):
        # ndarray (op) Tensor lands here; route the supported binary operators.
        op = _UFUNC_OPS.get(ufunc.__name__)
        if method != "__call__" or kwargs or op is None:
            raise UnsupportedPrimitive(f"numpy ufunc {ufunc.__name__!r} is not differentiable here")
        return op(*inputs)

    def __array_function__(self, func, types, args, kwargs):
        raise UnsupportedPrimitive(f"numpy function {func.__name__!r} is not differentiable here")

    @property
    def shape(self):
        return self.value.shape

    @property
    def T(self):
        return transpose(self)

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(_lift(other)))

    def __rsub__(self, other):
        return add(_lift(other), neg(self))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise UnsupportedPrimitive("division by a tensor is not supported")
        return mul(self, 1.0 / np.asarray(other, dtype=np.float64))

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def backward(self):
        if np.size(self.value) != 1:
            raise UnsupportedPrimitive("backward() needs a scalar output")
        order = _topological_order(self)
        for node in order:
            node.grad = None
        self.grad = np.ones_like(self.value)
        for node in reversed(order):
            if node._backward is None or node.grad is None:
                continue
            for parent, pgrad in zip(node._parents, node._backward(node.grad)):
                if parent.requires_grad and pgrad is not None:
                    parent.grad = pgrad if parent.grad is None else parent.grad + pgrad


def _topological_order(root):
    order, seen, stack = [], set(), [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))
    return order


def _lift(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(grad, shape):
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def add(a, b):
    a, b = _lift(a), _lift(b)
    return Tensor(
        a.value + b.value,
        parents=(a, b),
        backward=lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def neg(a):
    return Tensor(-a.value, parents=(a,), backward=lambda g: (-g,))


def mul(a, b):
    a, b = _lift(a), _lift(b)
    av, bv = a.value, b.value
    return Tensor(
        av * bv,
        parents=(a, b),
        backward=lambda g: (_unbroadcast(g * bv, a.shape), _unbroadcast(g * av, b.shape)),
    )


def power(a, exponent):
    if isinstance(exponent, Tensor):
        raise UnsupportedPrimitive("tensor exponents are not supported")
    av = a.value
    return Tensor(av**exponent, parents=(a,), backward=lambda g: (g * exponent * av ** (exponent - 1),))


def matmul(a, b):
    a, b = _lift(a), _lift(b)
    av, bv = a.value, b.value
    out = av @ bv
    if sp.issparse(out):
        out = out.toarray()

    def backward(g):
        ga = None if not a.requires_grad else g @ bv.T
        gb = None if not b.requires_grad else av.T @ g
        return ga, gb

    return Tensor(np.asarray(out), parents=(a, b), backward=backward)


def transpose(a):
    return Tensor(a.value.T, parents=(a,), backward=lambda g: (g.T,))


def sqrt(a):
    a = _lift(a)
    root = np.sqrt(a.value)

    def backward(g):
        # entries that underflowed to zero get a zero subgradient
        safe = np.where(root > 0, root, 1.0)
        return (np.where(root > 0, g * 0.5 / safe, 0.0),)

    return Tensor(root, parents=(a,), backward=backward)


def selu(a):
    a = _lift(a)
    x = a.value
    pos = x > 0
    expx = np.exp(np.minimum(x, 0.0))
    out = SELU_SCALE * np.where(pos, x, SELU_ALPHA * (expx - 1.0))
    slope = SELU_SCALE * np.where(pos, 1.0, SELU_ALPHA * expx)
    return Tensor(out, parents=(a,), backward=lambda g: (g * slope,))


def softmax(a, axis=-1):
    a = _lift(a)
    shifted = a.value - a.value.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    p = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (p * (g - np.sum(g * p, axis=axis, keepdims=True)),)

    return Tensor(p, parents=(a,), backward=backward)


def sum(a, axis=None):  # noqa: A001 - mirrors numpy naming
    a = _lift(a)
    shape = a.shape

    def backward(g):
        if axis is None:
            return (np.broadcast_to(g, shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), shape).copy(),)

    return Tensor(a.value.sum(axis=axis), parents=(a,), backward=backward)


def trace(a):
    a = _lift(a)
    if a.value.ndim != 2 or a.shape[0] != a.shape[1]:
        raise UnsupportedPrimitive("trace needs a square matrix")
    n = a.shape[0]
    return Tensor(np.trace(a.value), parents=(a,), backward=lambda g: (g * np.eye(n),))


def norm(a):
    """Euclidean (Frobenius) norm over all entries."""
    a = _lift(a)
    value = float(np.sqrt(np.sum(a.value * a.value)))
    av = a.value

    def backward(g):
        if value == 0.0:
            return (np.zeros_like(av),)
        return (g * av / value,)

    return Tensor(value, parents=(a,), backward=backward)


def gradient(loss_program: Callable[[Dict[str, Tensor]], Tensor], params: ParameterSet):
    """Value and exact gradients of a scalar program w.r.t. every parameter.

    ``loss_program`` receives a dict of leaf tensors keyed like ``params`` and
    must return a scalar :class:`Tensor` built from the primitives above.
    """
    leaves = {name: Tensor(np.array(value, dtype=np.float64), requires_grad=True)
              for name, value in params.items()}
    out = loss_program(leaves)
    if not isinstance(out, Tensor):
        raise UnsupportedPrimitive(
            f"loss program returned {type(out).__name__}, expected a Tensor"
        )
    out.backward()
    grads = {}
    for name, leaf in leaves.items():
        grads[name] = np.zeros_like(leaf.value) if leaf.grad is None else leaf.grad
    return float(out.value), grads


def evaluate(loss_program, params: ParameterSet) -> float:
    leaves = {name: Tensor(np.array(value, dtype=np.float64)) for name, value in params.items()}
    out = loss_program(leaves)
    return float(out.value if isinstance(out, Tensor) else out)


def finite_difference_gradient(loss_program, params: ParameterSet, step: float = 1e-5):
    """Central-difference estimate of every partial derivative."""
    estimate = {}
    for name, value in params.items():
        grad = np.zeros_like(np.asarray(value, dtype=np.float64))
        for idx in np.ndindex(grad.shape):
            plus = {k: np.array(v, dtype=np.float64) for k, v in params.items()}
            minus = {k: np.array(v, dtype=np.float64) for k, v in params.items()}
            plus[name][idx] += step
            minus[name][idx] -= step
            grad[idx] = (evaluate(loss_program, plus) - evaluate(loss_program, minus)) / (2 * step)
        estimate[name] = grad
    return estimate


def finite_difference_check(loss_program, params: ParameterSet, step: float = 1e-5) -> float:
    """Largest entrywise relative error between analytic and numeric gradients.

    The denominator is ``max(|analytic|, |numeric|, 1e-8)``.
    """
    if not step > 0:
        raise ValueError("step must be positive")
    _, analytic = gradient(loss_program, params)
    numeric = finite_difference_gradient(loss_program, params, step)
    worst = 0.0
    for name in params:
        a, n = analytic[name], numeric[name]
        if a.size == 0:
            continue
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-8)
        worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst


_UFUNC_OPS = {
    "add": lambda a, b: add(a, b),
    "subtract": lambda a, b: add(_lift(a), neg(_lift(b))),
    "multiply": lambda a, b: mul(a, b),
    "matmul": lambda a, b: matmul(a, b),
    "negative": lambda a: neg(a),
    "sqrt": lambda a: sqrt(a),
}
