# -*- coding: UTF-8 -*-
#
# Copyright 2024-2026 by the pydisent Contributors
# All rights reserved.
# This file is part of the pydisent Library, Licensed under GPLv3 (the 'License')
# You may not use this work except in compliance with the License.
# You may obtain a copy of the Licence at:
#   https://www.gnu.org/licenses/gpl-3.0.en.html

import threading

import numpy as np
import pytest

from pydisent.autodiff import (
    _accumulate,
    _result,
    amax,
    amin,
    central_moment,
    clip,
    columns,
    directional_check,
    exp,
    frobenius_norm_sq,
    grad_check,
    GradTape,
    hstack,
    l2_norm,
    log,
    matmul,
    maximum,
    mean,
    power,
    relu,
    sigmoid,
    softmax,
    softmax_row,
    sqrt,
    sum_,
    tanh,
    Tensor2,
)
from pydisent.diffutil import active_tape, EvaluationError, InvalidArgumentError

POSITIVE_W = np.linspace(0.5, 1.0, 12).reshape(4, 3)


def positive(rng, shape):
    return rng.uniform(0.5, 1.5, size=shape)


def test_tensor2_shapes():
    assert Tensor2(3.0).shape == (1, 1)
    assert Tensor2([1, 2, 3]).shape == (1, 3)
    assert Tensor2(np.zeros((2, 5))).shape == (2, 5)
    assert Tensor2.from_values(2, 3, range(6)).data[1, 0] == 3

    with pytest.raises(InvalidArgumentError, match='2 dimensions'):
        Tensor2(np.zeros((2, 2, 2)))

    with pytest.raises(InvalidArgumentError, match='do not fill'):
        Tensor2.from_values(2, 3, range(5))

    with pytest.raises(InvalidArgumentError, match='1x1'):
        Tensor2([1, 2]).item()


def test_numpy_is_a_copy():
    t = Tensor2([[1.0, 2.0]])
    values = t.numpy()
    values[0, 0] = 5
    assert t.data[0, 0] == 1.0


def test_values_without_tape():
    a = Tensor2([[1.0, 2.0]], requires_grad=True)
    b = a * 2.0 + 1.0
    assert b.op == 'add'
    assert not b.requires_grad
    assert np.array_equal(b.data, [[3.0, 5.0]])


def test_only_tracked_ops_are_recorded():
    a = Tensor2([[1.0, 2.0]], requires_grad=True)
    c = Tensor2([[3.0, 4.0]])
    with GradTape() as tape:
        untracked = c * c
        tracked = a * c
    assert not untracked.requires_grad
    assert tracked.requires_grad
    assert len(tape) == 2


def test_ndarray_operand_on_the_left():
    a = Tensor2([[1.0, 2.0]], requires_grad=True)
    with GradTape() as tape:
        y = sum_(np.array([[3.0, 4.0]]) * a)
    tape.backward(y)
    assert y.item() == 11.0
    assert np.array_equal(a.grad, [[3.0, 4.0]])


def test_broadcast_gradients():
    a = Tensor2(np.ones((2, 3)), requires_grad=True)
    row = Tensor2([[1.0, 2.0, 3.0]], requires_grad=True)
    col = Tensor2([[1.0], [2.0]], requires_grad=True)
    with GradTape() as tape:
        y = sum_(a * row + col)
    tape.backward(y)
    assert np.array_equal(a.grad, [[1.0, 2.0, 3.0], [1.0, 2.0, 3.0]])
    assert np.array_equal(row.grad, [[2.0, 2.0, 2.0]])
    assert np.array_equal(col.grad, [[3.0], [3.0]])


@pytest.mark.parametrize('a_shape, b_shape', (
    ((2, 3), (3, 2)),
    ((2, 3), (2, 2)),
    ((1, 3), (2, 4)),
))
def test_broadcast_errors(a_shape, b_shape):
    with pytest.raises(InvalidArgumentError, match='do not broadcast'):
        Tensor2(np.ones(a_shape)) + Tensor2(np.ones(b_shape))


def test_matmul_shape_error():
    with pytest.raises(InvalidArgumentError, match='matmul'):
        matmul(Tensor2(np.ones((2, 3))), Tensor2(np.ones((2, 3))))


def test_shared_subexpression_accumulates():
    x = Tensor2([[2.0]], requires_grad=True)
    with GradTape() as tape:
        y = x * x + x
    tape.backward(y)
    assert x.grad[0, 0] == 5.0


def test_unrelated_nodes_get_zero_gradients():
    x = Tensor2([[2.0]], requires_grad=True)
    z = Tensor2([[3.0]], requires_grad=True)
    with GradTape() as tape:
        y = x * 2.0
        z * 4.0
    tape.backward(y)
    assert z.grad[0, 0] == 0.0
    assert GradTape.gradient(Tensor2([[1.0]]))[0, 0] == 0.0


@pytest.mark.parametrize('f', (
    lambda t: sum_(tanh(t)),
    lambda t: sum_(sigmoid(t)),
    lambda t: sum_(exp(t)),
    lambda t: sum_(log(t)),
    lambda t: sum_(sqrt(t)),
    lambda t: sum_(power(t, 3)),
    lambda t: sum_(t * t / (t + 2.0)),
    lambda t: mean(relu(t - 0.25)),
    lambda t: frobenius_norm_sq(t),
    lambda t: l2_norm(t),
    lambda t: sum_(matmul(t, Tensor2(POSITIVE_W.T))),
    lambda t: sum_(hstack((t, t * 2.0))),
    lambda t: sum_(columns(t, 1, 3)),
    lambda t: sum_(mean(t, axis=0) * 3.0) + sum_(sum_(t, axis=1)),
    lambda t: amax(t) - amin(t * -1.0),
    lambda t: sum_(maximum(t, 0.25)),
    lambda t: sum_(clip(t, 0.25, 2.0)),
    lambda t: sum_(t.T @ t),
))
def test_elementwise_grad_check(f, rng):
    assert grad_check(f, positive(rng, (4, 3))) <= 1e-6


@pytest.mark.parametrize('f', (
    lambda t: sum_(softmax(t) * Tensor2(POSITIVE_W)),
    lambda t: sum_(central_moment(t, 2) * 2.0 + central_moment(t, 3)),
    lambda t: sum_(central_moment(t, 5)),
    lambda t: l2_norm(mean(t, axis=0) - 1.0) / (amax(t) - amin(t)) ** 2,
))
def test_directional_grad_check(f, rng):
    x = rng.standard_normal((4, 3))
    u = rng.standard_normal((4, 3))
    assert directional_check(f, x, u / np.linalg.norm(u)) <= 1e-5


def test_extremum_gradient_goes_to_first():
    x = Tensor2([[1.0, 3.0, 3.0, -2.0]], requires_grad=True)
    with GradTape() as tape:
        y = amax(x) + amin(x)
    tape.backward(y)
    assert y.item() == 1.0
    assert np.array_equal(x.grad, [[0.0, 1.0, 0.0, 1.0]])


def test_clip_gradient_outside_interval():
    x = Tensor2([[-1.0, 0.5, 2.0]], requires_grad=True)
    with GradTape() as tape:
        y = sum_(clip(x, 0.0, 1.0))
    tape.backward(y)
    assert np.array_equal(x.grad, [[0.0, 1.0, 0.0]])


def test_l2_norm_zero_subgradient():
    x = Tensor2(np.zeros((2, 2)), requires_grad=True)
    with GradTape() as tape:
        y = l2_norm(x)
    tape.backward(y)
    assert y.item() == 0.0
    assert not np.any(x.grad)


@pytest.mark.parametrize('values, expected', (
    ([1.0, 1.0, 1.0, 1.0], [0.25] * 4),
    ([0.0, np.log(3.0)], [0.25, 0.75]),
    ([1000.0, 1000.0], [0.5, 0.5]),
    ([-1000.0, 0.0], [0.0, 1.0]),
))
def test_softmax_row(values, expected):
    assert softmax_row(values) == pytest.approx(expected, abs=1e-12)


def test_softmax_rows_on_simplex(rng):
    w = softmax(Tensor2(rng.standard_normal((10, 4)) * 20)).data
    assert np.all(w >= 0)
    assert np.abs(w.sum(axis=1) - 1).max() <= 1e-12

    with pytest.raises(InvalidArgumentError, match='empty'):
        softmax_row([])


@pytest.mark.parametrize('k', (2, 3, 4, 5))
def test_central_moment_oracle(k, rng):
    x = rng.standard_normal((6, 3))
    expected = np.mean((x - x.mean(axis=0)) ** k, axis=0)
    assert central_moment(x, k).data[0] == pytest.approx(expected, abs=1e-12)


@pytest.mark.parametrize('k', (1, 0, 2.0))
def test_central_moment_order(k):
    with pytest.raises(InvalidArgumentError, match='order'):
        central_moment(np.ones((3, 2)), k)


def test_power_exponent():
    with pytest.raises(InvalidArgumentError, match='exponent'):
        power(Tensor2([[1.0]]), 0.5)


def test_reduce_axis():
    x = Tensor2(np.arange(6.0).reshape(2, 3))
    assert sum_(x).item() == 15.0
    assert np.array_equal(sum_(x, axis=0).data, [[3.0, 5.0, 7.0]])
    assert np.array_equal(mean(x, axis=1).data, [[1.0], [4.0]])
    with pytest.raises(InvalidArgumentError, match='axis'):
        sum_(x, axis=2)


def test_columns_bounds():
    with pytest.raises(InvalidArgumentError, match='outside'):
        columns(Tensor2(np.ones((2, 3))), 2, 4)


def test_hstack_errors():
    with pytest.raises(InvalidArgumentError, match='nothing'):
        hstack(())
    with pytest.raises(InvalidArgumentError, match='mismatched rows'):
        hstack((Tensor2(np.ones((2, 1))), Tensor2(np.ones((3, 1)))))


def test_grad_check_non_finite():
    with pytest.raises(EvaluationError, match='evaluated to'):
        grad_check(lambda t: sum_(log(t)), [[-1.0, 1.0]])


def test_grad_check_catches_a_wrong_gradient():
    def wrong_square(t):
        def backward(grad):
            _accumulate(t, grad * t.data)

        return sum_(_result(t.data ** 2, (t, ), backward, 'wrong'))

    assert grad_check(wrong_square, [[1.0, 2.0]]) > 0.1


def test_suspended_tape():
    x = Tensor2([[1.0]], requires_grad=True)
    with GradTape() as tape:
        with active_tape.suspended():
            assert active_tape.current is None
            x * 2.0
        assert active_tape.current is tape
    assert len(tape) == 0
    assert active_tape.current is None


def test_tape_is_thread_local():
    seen = []

    def other_thread():
        seen.append(active_tape.current)

    with GradTape():
        thread = threading.Thread(target=other_thread)
        thread.start()
        thread.join()
    assert seen == [None]


def test_softmax_row_shift_invariant():
    assert np.array_equal(softmax_row([5.0, 5.0, 5.0]), softmax_row([105.0, 105.0, 105.0]))


@pytest.mark.parametrize('m, expected', (
    (np.eye(2), 2.0),
    (np.zeros((2, 2)), 0.0),
    ([[1.0, 2.0], [3.0, 4.0]], 30.0),
))
def test_frobenius_norm_sq(m, expected):
    assert frobenius_norm_sq(m).item() == expected


@pytest.mark.parametrize('column, k, expected', (
    ([1.0, -1.0], 2, 1.0),
    ([3.0, 3.0, 3.0], 4, 0.0),
    ([-1.0, 0.0, 1.0], 3, 0.0),
))
def test_central_moment_examples(column, k, expected):
    x = np.array(column).reshape(-1, 1)
    assert central_moment(x, k).item() == pytest.approx(expected, abs=1e-15)


def test_grad_check_sum_of_squares(rng):
    assert grad_check(lambda t: sum_(t * t), positive(rng, (3, 5))) <= 1e-7


def test_hstack_routes_gradient_slices():
    a = Tensor2(np.ones((2, 1)), requires_grad=True)
    b = Tensor2(np.ones((2, 3)), requires_grad=True)
    c = Tensor2(np.ones((2, 2)), requires_grad=True)
    weights = np.arange(12.0).reshape(2, 6)
    with GradTape() as tape:
        y = sum_(hstack((a, b, c)) * Tensor2(weights))
    tape.backward(y)
    assert np.array_equal(a.grad, weights[:, :1])
    assert np.array_equal(b.grad, weights[:, 1:4])
    assert np.array_equal(c.grad, weights[:, 4:])
