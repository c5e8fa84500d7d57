# -*- coding: UTF-8 -*-
#
# Copyright 2024-2026 by the pydisent Contributors
# All rights reserved.
# This file is part of the pydisent Library, Licensed under GPLv3 (the 'License')
# You may not use this work except in compliance with the License.
# You may obtain a copy of the Licence at:
#   https://www.gnu.org/licenses/gpl-3.0.en.html

"""
Reverse mode differentiation over dense float64 matrices.

Operations on `Tensor2` record themselves onto the `GradTape` active on the
current thread.  The tape is a `networkx.DiGraph` whose edges run from each
input to the tensor computed from it, so backward is a walk of the loss'
ancestors in reverse topological order.  Outside of a tape the same
operations only compute values.
"""
import logging

import networkx as nx
import numpy as np

from pydisent.diffutil import (
    active_tape,
    EvaluationError,
    InvalidArgumentError,
    Shape,
)

pydisent_logger = logging.getLogger('pydisent')


class Tensor2:
    """A rows x cols float64 matrix which can take part in a GradTape"""

    def __init__(self, data, requires_grad=False):
        arr = np.array(data, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(1, -1)
        elif arr.ndim != 2:
            raise InvalidArgumentError(f'Tensor2 needs 2 dimensions, got {arr.ndim}')
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self.op = 'leaf'

    def __repr__(self):
        return f'Tensor2({self.rows}x{self.cols}, op={self.op}, requires_grad={self.requires_grad})'

    __str__ = __repr__

    # identity hashing, tensors are graph nodes
    __hash__ = object.__hash__

    # ndarray <op> Tensor2 defers to the reflected Tensor2 operator
    __array_ufunc__ = None

    @classmethod
    def zeros(cls, rows, cols, requires_grad=False):
        return cls(np.zeros((rows, cols)), requires_grad=requires_grad)

    @classmethod
    def uniform(cls, rows, cols, bound, rng, requires_grad=True):
        return cls(rng.uniform(-bound, bound, size=(rows, cols)),
                   requires_grad=requires_grad)

    @classmethod
    def from_values(cls, rows, cols, values, requires_grad=False):
        """Build from row major values, len(values) must be rows * cols"""
        values = np.asarray(values, dtype=np.float64).reshape(-1)
        if len(values) != rows * cols:
            raise InvalidArgumentError(
                f'{len(values)} values do not fill a {rows}x{cols} Tensor2')
        return cls(values.reshape(rows, cols), requires_grad=requires_grad)

    @property
    def rows(self):
        return self.data.shape[0]

    @property
    def cols(self):
        return self.data.shape[1]

    @property
    def shape(self):
        return Shape(*self.data.shape)

    def numpy(self):
        return self.data.copy()

    def item(self):
        if self.data.size != 1:
            raise InvalidArgumentError(f'item() needs a 1x1 Tensor2, not {self.shape}')
        return float(self.data[0, 0])

    def detach(self):
        return Tensor2(self.data)

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, k):
        return power(self, k)

    @property
    def T(self):
        return transpose(self)

    def sum(self, axis=None):
        return sum_(self, axis)

    def mean(self, axis=None):
        return mean(self, axis)

    def tanh(self):
        return tanh(self)

    def sigmoid(self):
        return sigmoid(self)


class GradTape:
    """Define by run record of the operations of one forward pass

    Usage::

        with GradTape() as tape:
            loss = f(params)
        tape.backward(loss)
    """

    def __init__(self):
        self.graph = nx.DiGraph()
        self.log = pydisent_logger

    def __enter__(self):
        active_tape.push(self)
        return self

    def __exit__(self, *args):
        active_tape.pop(self)

    def __len__(self):
        return len(self.graph)

    def record(self, out, parents, backward):
        self.graph.add_node(out, backward=backward)
        for parent in parents:
            if parent.requires_grad:
                if parent not in self.graph:
                    self.graph.add_node(parent, backward=None)
                self.graph.add_edge(parent, out)

    def backward(self, loss, grad=None):
        """Accumulate d(loss)/d(node) into `.grad` of every recorded node

        Nodes not on a path to the loss end with a zero gradient.
        """
        for node in self.graph:
            node.grad = np.zeros_like(node.data)

        if loss not in self.graph:
            self.log.debug('backward(): loss does not depend on the tape')
            return

        loss.grad = (np.ones_like(loss.data) if grad is None
                     else np.array(grad, dtype=np.float64).reshape(loss.data.shape))

        needed = nx.ancestors(self.graph, loss)
        needed.add(loss)
        order = list(nx.topological_sort(self.graph.subgraph(needed)))
        self.log.debug(f'backward(): {len(order)} of {len(self.graph)} nodes')

        for node in reversed(order):
            node_backward = self.graph.nodes[node]['backward']
            if node_backward is not None:
                node_backward(node.grad)

    @staticmethod
    def gradient(tensor):
        return np.zeros_like(tensor.data) if tensor.grad is None else tensor.grad


def _as_tensor(value):
    return value if isinstance(value, Tensor2) else Tensor2(value)


def _result(data, parents, backward, op):
    """Wrap an op's value and record it if any parent is being tracked"""
    out = Tensor2(data)
    out.op = op
    tape = active_tape.current
    if tape is not None and any(p.requires_grad for p in parents):
        out.requires_grad = True
        tape.record(out, parents, backward)
    return out


def _accumulate(tensor, grad):
    if tensor.requires_grad and tensor.grad is not None:
        tensor.grad += grad


def _unbroadcast(grad, shape):
    if shape[0] == 1 and grad.shape[0] != 1:
        grad = grad.sum(axis=0, keepdims=True)
    if shape[1] == 1 and grad.shape[1] != 1:
        grad = grad.sum(axis=1, keepdims=True)
    return grad


def _check_broadcast(a, b, op):
    for dim_a, dim_b in zip(a.data.shape, b.data.shape):
        if dim_a != dim_b and 1 not in (dim_a, dim_b):
            raise InvalidArgumentError(
                f'{op}: shapes {a.shape} and {b.shape} do not broadcast')


def add(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast(a, b, 'add')

    def backward(grad):
        _accumulate(a, _unbroadcast(grad, a.data.shape))
        _accumulate(b, _unbroadcast(grad, b.data.shape))

    return _result(a.data + b.data, (a, b), backward, 'add')


def sub(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast(a, b, 'sub')

    def backward(grad):
        _accumulate(a, _unbroadcast(grad, a.data.shape))
        _accumulate(b, -_unbroadcast(grad, b.data.shape))

    return _result(a.data - b.data, (a, b), backward, 'sub')


def mul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast(a, b, 'mul')

    def backward(grad):
        _accumulate(a, _unbroadcast(grad * b.data, a.data.shape))
        _accumulate(b, _unbroadcast(grad * a.data, b.data.shape))

    return _result(a.data * b.data, (a, b), backward, 'mul')


def div(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast(a, b, 'div')
    value = a.data / b.data

    def backward(grad):
        _accumulate(a, _unbroadcast(grad / b.data, a.data.shape))
        _accumulate(b, _unbroadcast(-grad * value / b.data, b.data.shape))

    return _result(value, (a, b), backward, 'div')


def neg(a):
    a = _as_tensor(a)

    def backward(grad):
        _accumulate(a, -grad)

    return _result(-a.data, (a, ), backward, 'neg')


def matmul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    if a.cols != b.rows:
        raise InvalidArgumentError(f'matmul: {a.shape} @ {b.shape}')

    def backward(grad):
        _accumulate(a, grad @ b.data.T)
        _accumulate(b, a.data.T @ grad)

    return _result(a.data @ b.data, (a, b), backward, 'matmul')


def transpose(a):
    def backward(grad):
        _accumulate(a, grad.T)

    return _result(a.data.T, (a, ), backward, 'transpose')


def tanh(a):
    value = np.tanh(a.data)

    def backward(grad):
        _accumulate(a, grad * (1.0 - value * value))

    return _result(value, (a, ), backward, 'tanh')


def sigmoid(a):
    # tanh form does not overflow for large |x|
    value = 0.5 * (1.0 + np.tanh(0.5 * a.data))

    def backward(grad):
        _accumulate(a, grad * value * (1.0 - value))

    return _result(value, (a, ), backward, 'sigmoid')


def exp(a):
    value = np.exp(a.data)

    def backward(grad):
        _accumulate(a, grad * value)

    return _result(value, (a, ), backward, 'exp')


def log(a):
    def backward(grad):
        _accumulate(a, grad / a.data)

    return _result(np.log(a.data), (a, ), backward, 'log')


def sqrt(a):
    value = np.sqrt(a.data)

    def backward(grad):
        _accumulate(a, grad * 0.5 / value)

    return _result(value, (a, ), backward, 'sqrt')


def power(a, k):
    if not isinstance(k, int) or k < 1:
        raise InvalidArgumentError(f'power: exponent must be a positive int, got {k}')

    def backward(grad):
        _accumulate(a, grad * k * a.data ** (k - 1))

    return _result(a.data ** k, (a, ), backward, f'pow{k}')


def relu(a):
    mask = a.data > 0

    def backward(grad):
        _accumulate(a, grad * mask)

    return _result(np.where(mask, a.data, 0.0), (a, ), backward, 'relu')


def clip(a, lo, hi):
    """Clamp into [lo, hi], gradient passes only inside the interval"""
    mask = (a.data >= lo) & (a.data <= hi)

    def backward(grad):
        _accumulate(a, grad * mask)

    return _result(np.clip(a.data, lo, hi), (a, ), backward, 'clip')


def maximum(a, floor):
    """Elementwise max(a, floor) against a constant"""
    mask = a.data > floor

    def backward(grad):
        _accumulate(a, grad * mask)

    return _result(np.where(mask, a.data, float(floor)), (a, ), backward, 'maximum')


def _reduce_axis(axis):
    if axis not in (None, 0, 1):
        raise InvalidArgumentError(f'axis must be None, 0 or 1, not {axis}')
    return (0, 1) if axis is None else axis


def sum_(a, axis=None):
    np_axis = _reduce_axis(axis)
    shape = a.data.shape

    def backward(grad):
        _accumulate(a, np.broadcast_to(grad, shape))

    return _result(a.data.sum(axis=np_axis, keepdims=True), (a, ), backward, 'sum')


def mean(a, axis=None):
    np_axis = _reduce_axis(axis)
    shape = a.data.shape
    count = a.data.size if axis is None else shape[axis]

    def backward(grad):
        _accumulate(a, np.broadcast_to(grad / count, shape))

    return _result(a.data.mean(axis=np_axis, keepdims=True), (a, ), backward, 'mean')


def _extremum(a, arg_func, op):
    if a.data.size == 0:
        raise InvalidArgumentError(f'{op} of an empty Tensor2')
    index = np.unravel_index(arg_func(a.data), a.data.shape)

    def backward(grad):
        local = np.zeros_like(a.data)
        local[index] = grad[0, 0]
        _accumulate(a, local)

    return _result(a.data[index], (a, ), backward, op)


def amin(a):
    """Minimum entry, gradient goes to the first arg-minimum"""
    return _extremum(a, np.argmin, 'amin')


def amax(a):
    """Maximum entry, gradient goes to the first arg-maximum"""
    return _extremum(a, np.argmax, 'amax')


def hstack(tensors):
    tensors = tuple(_as_tensor(t) for t in tensors)
    if not tensors:
        raise InvalidArgumentError('hstack of nothing')
    rows = {t.rows for t in tensors}
    if len(rows) != 1:
        raise InvalidArgumentError(f'hstack: mismatched rows {sorted(rows)}')
    offsets = np.cumsum([0] + [t.cols for t in tensors])

    def backward(grad):
        for t, start, stop in zip(tensors, offsets, offsets[1:]):
            _accumulate(t, grad[:, start:stop])

    return _result(np.hstack([t.data for t in tensors]), tensors, backward, 'hstack')


def columns(a, start, stop):
    """Columns [start, stop) of a"""
    if not 0 <= start < stop <= a.cols:
        raise InvalidArgumentError(f'columns [{start}, {stop}) outside of {a.shape}')

    def backward(grad):
        local = np.zeros_like(a.data)
        local[:, start:stop] = grad
        _accumulate(a, local)

    return _result(a.data[:, start:stop], (a, ), backward, 'columns')


def softmax(a):
    """Row-wise softmax with max subtraction"""
    if a.cols == 0:
        raise InvalidArgumentError('softmax of an empty vector')
    shifted = a.data - a.data.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    value = e / e.sum(axis=1, keepdims=True)

    def backward(grad):
        inner = (grad * value).sum(axis=1, keepdims=True)
        _accumulate(a, value * (grad - inner))

    return _result(value, (a, ), backward, 'softmax')


def l2_norm(a):
    """Euclidean norm over all entries, zero subgradient at the origin"""
    norm = float(np.sqrt(np.sum(a.data * a.data)))

    def backward(grad):
        if norm > 0:
            _accumulate(a, grad[0, 0] * a.data / norm)

    return _result(norm, (a, ), backward, 'l2_norm')


def softmax_row(values):
    """Softmax of a single vector, returned as a 1-d array"""
    if isinstance(values, Tensor2):
        values = values.data
    values = np.asarray(values, dtype=np.float64).reshape(-1)
    if values.size == 0:
        raise InvalidArgumentError('softmax_row of an empty vector')
    return softmax(Tensor2(values)).data[0]


def frobenius_norm_sq(m):
    """Sum of squared entries, a 1x1 Tensor2"""
    m = _as_tensor(m)
    return sum_(m * m)


def central_moment(x, k):
    """Per column k-th central moment (k >= 2) as a 1 x cols Tensor2"""
    x = _as_tensor(x)
    if not isinstance(k, int) or k < 2:
        raise InvalidArgumentError(
            f'central_moment order must be an int >= 2, got {k}; '
            'the first moment is the mean difference term')
    if x.rows < 1:
        raise InvalidArgumentError('central_moment needs at least one row')
    centered = x - mean(x, axis=0)
    return mean(power(centered, k), axis=0)


def _finite_scalar(value, what):
    if isinstance(value, Tensor2):
        value = value.item()
    value = float(value)
    if not np.isfinite(value):
        raise EvaluationError(f'{what} evaluated to {value}')
    return value


def grad_check(f, x, h=1e-4):
    """Largest relative error between reverse mode and central differences

    :param f: callable taking a Tensor2 shaped like x, returning a 1x1 Tensor2
    :param x: Tensor2 or array at which to check
    :param h: finite difference step
    :return: max_i |a_i - n_i| / max(1e-8, |a_i| + |n_i|)
    """
    if not h > 0:
        raise InvalidArgumentError(f'grad_check step must be > 0, got {h}')
    x0 = np.array(x.data if isinstance(x, Tensor2) else x, dtype=np.float64)
    if x0.ndim < 2:
        x0 = x0.reshape(1, -1)

    leaf = Tensor2(x0, requires_grad=True)
    with GradTape() as tape:
        y = f(leaf)
    _finite_scalar(y, 'grad_check f(x)')
    tape.backward(y)
    analytic = tape.gradient(leaf)

    numeric = np.zeros_like(x0)
    with active_tape.suspended():
        for index in np.ndindex(*x0.shape):
            x_plus = x0.copy()
            x_plus[index] += h
            x_minus = x0.copy()
            x_minus[index] -= h
            numeric[index] = (
                _finite_scalar(f(Tensor2(x_plus)), 'grad_check f(x+h)') -
                _finite_scalar(f(Tensor2(x_minus)), 'grad_check f(x-h)')) / (2 * h)

    error = np.abs(analytic - numeric) / np.maximum(1e-8, np.abs(analytic) + np.abs(numeric))
    return float(error.max()) if error.size else 0.0


def affine(x, w, b):
    """x @ w + b with the 1 x out bias broadcast over rows"""
    if x.cols != w.rows or b.shape != (1, w.cols):
        raise InvalidArgumentError(
            f'affine: input {x.shape}, weight {w.shape}, bias {b.shape}')
    return add(matmul(x, w), b)


def directional_check(f, x, direction, h=1e-4):
    """Relative error of the reverse mode derivative of f along `direction`

    Compares <grad f(x), u> with (f(x + h u) - f(x - h u)) / 2h, which stays
    well conditioned when single gradient entries are close to zero.
    """
    if not h > 0:
        raise InvalidArgumentError(f'directional_check step must be > 0, got {h}')
    x0 = np.array(x.data if isinstance(x, Tensor2) else x, dtype=np.float64)
    if x0.ndim < 2:
        x0 = x0.reshape(1, -1)
    u = np.asarray(direction, dtype=np.float64).reshape(x0.shape)

    leaf = Tensor2(x0, requires_grad=True)
    with GradTape() as tape:
        y = f(leaf)
    _finite_scalar(y, 'directional_check f(x)')
    tape.backward(y)
    analytic = float(np.sum(tape.gradient(leaf) * u))

    with active_tape.suspended():
        numeric = (_finite_scalar(f(Tensor2(x0 + h * u)), 'directional_check f(x+hu)') -
                   _finite_scalar(f(Tensor2(x0 - h * u)), 'directional_check f(x-hu)')) / (2 * h)
    return abs(analytic - numeric) / max(1e-8, abs(analytic) + abs(numeric))
