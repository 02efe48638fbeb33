# pylint: disable=redefined-outer-name,unused-variable,expression-not-assigned

import numpy as np
import pytest

from playgrader.exceptions import PlayGraderException
from playgrader.tensor import Tensor, backward, concat, huber, no_grad, slice_last, stack
from tests.conftest import numeric_gradient, relative_error


def check_op(op, *shapes, rng, positive=False):
    """Compare the tape gradient of sum(op(*xs) * weights) to central differences."""
    arrays = [rng.normal(size=shape) for shape in shapes]
    if positive:
        arrays = [np.abs(a) + 0.5 for a in arrays]
    leaves = [Tensor(a, requires_grad=True) for a in arrays]
    out = op(*leaves)
    weights = rng.normal(size=out.shape)

    def loss_value():
        return float(np.sum(op(*[Tensor(a) for a in arrays]).data * weights))

    grads = backward((out * Tensor(weights)).sum())
    return max(relative_error(grads[id(leaf)], numeric_gradient(loss_value, array))
               for leaf, array in zip(leaves, arrays))


OPS = {
    "add": (lambda x, y: x + y, [(3, 4), (3, 4)]),
    "add-broadcast": (lambda x, y: x + y, [(3, 4), (4,)]),
    "sub": (lambda x, y: x - y, [(5,), (5,)]),
    "mul": (lambda x, y: x * y, [(2, 3), (2, 3)]),
    "neg": (lambda x: -x, [(4,)]),
    "relu": (lambda x: x.relu(), [(6,)]),
    "sigmoid": (lambda x: x.sigmoid(), [(6,)]),
    "tanh": (lambda x: x.tanh(), [(2, 5)]),
    "square": (lambda x: x.square(), [(5,)]),
    "huber": (lambda x: huber(x * 3.0), [(8,)]),
    "concat": (lambda x, y: concat([x, y]), [(2, 3), (2, 4)]),
    "slice": (lambda x: slice_last(x, 1, 4), [(3, 6)]),
    "stack": (lambda x, y: stack([x, y]), [(4,), (4,)]),
    "index": (lambda x: x[(np.array([0, 2, 2]), np.array([1, 0, 1]))], [(3, 2)]),
    "mean": (lambda x: x.mean(), [(3, 3)]),
    "log-softmax": (lambda x: x.log_softmax(), [(4, 3)]),
}


def describe_tape():

    def describe_gradients():

        @pytest.mark.parametrize("name", sorted(OPS))
        def it_matches_central_differences(expect, rng, name):
            op, shapes = OPS[name]
            for _ in range(10):
                expect(check_op(op, *shapes, rng=rng)) < 1e-4

        def it_accumulates_over_shared_inputs(expect):
            x = Tensor(np.array([2.0, -1.0]), requires_grad=True)
            loss = (x * x + x).sum()
            grads = backward(loss)
            expect(grads[id(x)].tolist()) == [5.0, -1.0]

        def it_handles_long_chains_without_recursion(expect):
            x = Tensor(np.array([1.0]), requires_grad=True)
            y = x
            for _ in range(5000):
                y = y * 1.0 + 0.0
            grads = backward(y.sum())
            expect(grads[id(x)].tolist()) == [1.0]

    def describe_backward():

        def it_rejects_unrecorded_losses():
            with pytest.raises(PlayGraderException):
                backward(Tensor(np.array(1.0)))

        def it_rejects_non_scalar_losses():
            x = Tensor(np.ones(3), requires_grad=True)
            with pytest.raises(PlayGraderException):
                backward(x * 2.0)

    def describe_no_grad():

        def it_stops_recording(expect):
            x = Tensor(np.ones(3), requires_grad=True)
            with no_grad():
                y = (x * 2.0).sum()
            expect(y.requires_grad) == False

        def it_restores_the_previous_mode(expect):
            x = Tensor(np.ones(3), requires_grad=True)
            with no_grad():
                with no_grad():
                    pass
                expect((x * 2.0).requires_grad) == False
            expect((x * 2.0).requires_grad) == True
